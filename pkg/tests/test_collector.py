"""Collector behaviour: counting, dedup, loss-on-stop, failure alerts."""

import json

import pytest

from fleetlab.dataplane.broker import Broker
from fleetlab.dataplane.collector import SensorCollector
from fleetlab.dataplane.tsdb import TimeSeriesStore


def sample_payload(node="RSE-001", metric="temperature", ts=100.0, value=21.5):
    return json.dumps({
        "node": node, "metric": metric, "sensor": "sht45",
        "ts": ts, "value": value, "unit": "degC", "quality": "ok",
    }).encode("utf-8")


def publish_sample(broker, node="RSE-001", **kw):
    topic = "nodes/%s/sensors/%s" % (node, kw.get("metric", "temperature"))
    return broker.publish(f"agent:{node}", topic,
                          sample_payload(node=node, **kw), qos=0)


def test_collector_stores_published_samples(tmp_path):
    broker = Broker()
    store = TimeSeriesStore(tmp_path)
    col = SensorCollector(broker, store)
    col.start()
    publish_sample(broker, ts=10.0)
    publish_sample(broker, ts=20.0)
    assert col.received == 2
    assert col.stored == 2
    assert len(store.query(nodes=["RSE-001"])) == 2


def test_collector_counts_duplicates(tmp_path):
    broker = Broker()
    store = TimeSeriesStore(tmp_path)
    col = SensorCollector(broker, store)
    col.start()
    publish_sample(broker, ts=10.0)
    publish_sample(broker, ts=10.0)
    assert col.stored == 1
    assert col.duplicates == 1


def test_samples_published_while_stopped_are_lost(tmp_path):
    broker = Broker()
    store = TimeSeriesStore(tmp_path)
    col = SensorCollector(broker, store)
    col.start()
    publish_sample(broker, ts=10.0)
    col.stop()
    publish_sample(broker, ts=20.0)  # nobody listening
    publish_sample(broker, ts=30.0)
    col.start()
    publish_sample(broker, ts=40.0)
    got = sorted(s.ts for s in store.query(nodes=["RSE-001"]))
    assert got == [10.0, 40.0]
    assert col.received == 2


def test_write_failure_raises_alert(tmp_path):
    broker = Broker()
    store = TimeSeriesStore(tmp_path)
    alerts = []
    col = SensorCollector(broker, store, alert_cb=alerts.append)
    col.start()
    store.fail_writes = True
    publish_sample(broker, ts=10.0)
    assert col.write_failures == 1
    assert alerts and alerts[0]["kind"] == "store_write_failure"
    assert alerts[0]["node"] == "RSE-001"
    store.fail_writes = False
    publish_sample(broker, ts=20.0)
    assert col.stored == 1
