"""Role-based access control.

Two layers gate everything:

1. Network gate: a user may see or use a network only when their roles
   intersect that network's default_roles (admins bypass this).
2. Project grant: the owner and Developer members may run experiments and
   modify uploads; Viewer members may only read results.

All rules are positive (grants, never revocations), so adding a role can
only widen what a user may do.
"""

from __future__ import annotations

from enum import Enum
from typing import Optional

from .model import Network, Project, ProjectRole, User

ADMIN_ROLE = "admin"
OPERATOR_ROLE = "operator"


class Action(str, Enum):
    # Project-scoped
    VIEW_PROJECT = "view_project"         # metadata, experiments, results
    RUN_EXPERIMENT = "run_experiment"     # create/schedule/cancel/repeat/abort
    MODIFY_ARTIFACTS = "modify_artifacts" # upload or replace project files
    SHARE_PROJECT = "share_project"
    # Network-scoped
    VIEW_NETWORK = "view_network"
    # Platform-scoped
    CREATE_PROJECT = "create_project"
    ACTIVATE_GATED = "activate_gated"
    OVERRIDE_ARTIFACT = "override_artifact"
    VERIFY_USER = "verify_user"
    ADMINISTER = "administer"


PLATFORM_ADMIN_ACTIONS = {Action.OVERRIDE_ARTIFACT, Action.VERIFY_USER,
                          Action.ADMINISTER}

# Which project roles grant which project-scoped actions.  Owner is treated
# as Developer.  SHARE is owner-only (plus admin).
_PROJECT_GRANTS = {
    ProjectRole.DEVELOPER: {Action.VIEW_PROJECT, Action.RUN_EXPERIMENT,
                            Action.MODIFY_ARTIFACTS},
    ProjectRole.VIEWER: {Action.VIEW_PROJECT},
}


def is_admin(user: User) -> bool:
    return ADMIN_ROLE in user.roles


def is_operator(user: User) -> bool:
    return OPERATOR_ROLE in user.roles


def network_visible(user: User, network: Network) -> bool:
    if is_admin(user):
        return True
    return bool(user.roles & network.default_roles)


def authorize(user: User, action: Action,
              project: Optional[Project] = None,
              network: Optional[Network] = None) -> bool:
    """Return True when ``user`` may perform ``action`` on the target.

    Pass the project (and its network) for project-scoped actions, the
    network alone for network-scoped ones.  Never raises; callers turn
    False into the appropriate Denied error.
    """
    if is_admin(user):
        return True

    if action in PLATFORM_ADMIN_ACTIONS:
        return False

    if action is Action.CREATE_PROJECT:
        # Unverified accounts may browse but may not own projects.
        if not user.verified:
            return False
        return network is None or network_visible(user, network)

    if action is Action.VIEW_NETWORK:
        return network is not None and network_visible(user, network)

    if action is Action.ACTIVATE_GATED:
        if not is_operator(user):
            return False
        return network is None or network_visible(user, network)

    # Project-scoped from here on.
    if project is None:
        return False
    if network is not None and not network_visible(user, network):
        return False

    role = project.role_of(user.id)
    if role is None:
        return False
    if action is Action.SHARE_PROJECT:
        return user.id == project.owner
    return action in _PROJECT_GRANTS[role]
