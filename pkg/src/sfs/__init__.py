"""Secure file exchange service (SFS).

Clients and administrators hold X.509 certificates issued by the service's
own CA, connect over mutually-authenticated TLS, and are resolved against a
hierarchical principal directory before a group-aware ACL decides what they
may do with stored files.  Every action lands in an append-only audit log.
"""

__version__ = "0.1.0"
