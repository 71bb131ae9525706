from typing import NewType

# Identifier of one IP block (and of its LEM/PSM pair)
IpId = NewType("IpId", str)


class ConfigInvalid(Exception):
    """
    A scenario document or one of its sections failed validation.  The message
    starts with the path of the offending field, e.g. ``rules[3].battery``.
    """
