"""Authorization engine tests.

``reference_decision`` below is the brute-force oracle: a second,
deliberately different implementation of the published rule order working
on plain tuples and sets instead of the library's types.  The equivalence
test sweeps every combination of the canonical population against it.
"""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sfs.acl import (
    DEFAULT_GROUP_PERMISSIONS,
    AclEntry,
    NoSuchAclEntry,
    Permission,
    Principal,
    Scope,
    Subject,
    UnknownScope,
    UnknownSubject,
    effective_permissions,
    evaluate,
    grant,
    parse_scope,
    parse_subject,
    revoke,
)
from sfs.dn import parse_dn

# -- the oracle (kept free of sfs.acl internals on purpose) -------------------

RULES = ("SUSPENDED", "ADMIN", "OWNER", "UPLOADER", "GRANTED", "NO_GRANT")


def reference_decision(user, perm, scope, table, uploader):
    """First-match walk over the rule list, on primitive data.

    user: (username, role, status, frozenset of groups)
    scope: ("home"|"group", name);  table: [(subject, scope, permset)]
    with subject ("user"|"group", name);  uploader: username or None.
    """
    username, role, status, groups = user
    outcomes = []
    outcomes.append(("SUSPENDED", False) if status != "active" else None)
    outcomes.append(("ADMIN", True) if role == "administrator" else None)
    outcomes.append(("OWNER", True) if scope == ("home", username) else None)
    outcomes.append(
        ("UPLOADER", True) if perm == "DELETE" and uploader == username else None
    )
    granted = set()
    for subject, entry_scope, perms in table:
        if entry_scope != scope:
            continue
        if subject == ("user", username) or (subject[0] == "group" and subject[1] in groups):
            granted |= set(perms)
    outcomes.append(("GRANTED", True) if perm in granted else None)
    outcomes.append(("NO_GRANT", False))
    return next(o for o in outcomes if o is not None)


# -- canonical population -----------------------------------------------------

BASE = "dc=sfs,dc=local"


def make_principal(username, role="client", status="active", groups=()):
    return Principal(
        username=username,
        role=role,
        status=status,
        dn=parse_dn(f"uid={username},ou=people,{BASE}"),
        cert_fingerprint="0" * 64,
        groups=tuple(groups),
    )


ANN = make_principal("admin-ann", role="administrator")
BOB = make_principal("bob", groups=("dev",))
CAROL = make_principal("carol", groups=("dev", "qa"))

FIXTURE_ENTRIES = [
    AclEntry(
        Subject.group("dev"),
        Scope("group", "dev"),
        frozenset({Permission.VIEW, Permission.DOWNLOAD, Permission.UPLOAD}),
    )
]

FIXTURE_TABLE = [(("group", "dev"), ("group", "dev"), {"VIEW", "DOWNLOAD", "UPLOAD"})]

SCOPES = [
    Scope("home", "admin-ann"),
    Scope("home", "bob"),
    Scope("home", "carol"),
    Scope("group", "dev"),
    Scope("group", "qa"),
]


def test_oracle_equivalence_exhaustive():
    """evaluate() agrees with the independent oracle on all 180 combinations
    of the canonical population (3 principals x 4 permissions x 5 scopes x
    3 uploader cases)."""
    checks = 0
    for principal in (ANN, BOB, CAROL):
        for permission in Permission:
            for scope in SCOPES:
                for uploader in (principal.username, "zoe", None):
                    decision = evaluate(
                        principal, permission, scope, FIXTURE_ENTRIES, uploader
                    )
                    reason, allow = reference_decision(
                        (
                            principal.username,
                            principal.role,
                            principal.status,
                            frozenset(principal.groups),
                        ),
                        permission.value,
                        (scope.kind, scope.name),
                        FIXTURE_TABLE,
                        uploader,
                    )
                    assert (decision.allow, decision.reason) == (allow, reason), (
                        principal.username,
                        permission,
                        scope,
                        uploader,
                    )
                    checks += 1
    assert checks == 180


class TestRuleOrder:
    def test_suspended_admin_denied_everywhere(self):
        """Rule 1 precedes rule 2: suspension beats the administrator bypass."""
        suspended = make_principal("ann", role="administrator", status="suspended")
        decision = evaluate(suspended, Permission.VIEW, Scope("home", "ann"), [])
        assert not decision.allow and decision.reason == "SUSPENDED"

    def test_owner_in_own_home(self):
        decision = evaluate(BOB, Permission.DELETE, Scope("home", "bob"), [])
        assert decision.allow and decision.reason == "OWNER"

    def test_admin_reason_takes_precedence_over_owner(self):
        decision = evaluate(ANN, Permission.VIEW, Scope("home", "admin-ann"), [])
        assert decision.allow and decision.reason == "ADMIN"

    def test_uploader_may_delete_own_file(self):
        decision = evaluate(
            BOB, Permission.DELETE, Scope("group", "dev"), FIXTURE_ENTRIES, "bob"
        )
        assert decision.allow and decision.reason == "UPLOADER"

    def test_group_member_cannot_delete_anothers_file(self):
        decision = evaluate(
            BOB, Permission.DELETE, Scope("group", "dev"), FIXTURE_ENTRIES, "carol"
        )
        assert not decision.allow and decision.reason == "NO_GRANT"

    def test_granted_via_group(self):
        decision = evaluate(BOB, Permission.UPLOAD, Scope("group", "dev"), FIXTURE_ENTRIES)
        assert decision.allow and decision.reason == "GRANTED"

    def test_non_member_denied(self):
        outsider = make_principal("zoe")
        decision = evaluate(outsider, Permission.VIEW, Scope("group", "dev"), FIXTURE_ENTRIES)
        assert not decision.allow and decision.reason == "NO_GRANT"


class FakeDirectory:
    def __init__(self, users=(), groups=()):
        self.users, self.groups = set(users), set(groups)

    def has_user(self, name):
        return name in self.users

    def has_group(self, name):
        return name in self.groups


class TestGrantRevoke:
    directory = FakeDirectory(users={"bob", "carol"}, groups={"dev"})

    def test_grant_then_evaluate(self):
        entries = grant(
            [], Subject.user("bob"), Scope("home", "carol"), {Permission.VIEW}, self.directory
        )
        decision = evaluate(BOB, Permission.VIEW, Scope("home", "carol"), entries)
        assert decision.allow and decision.reason == "GRANTED"

    def test_grant_replaces_not_merges(self):
        entries = grant(
            [], Subject.user("bob"), Scope("group", "dev"), {Permission.VIEW}, self.directory
        )
        entries = grant(
            entries, Subject.user("bob"), Scope("group", "dev"), {Permission.UPLOAD}, self.directory
        )
        assert len(entries) == 1
        assert entries[0].permissions == frozenset({Permission.UPLOAD})

    def test_grant_unknown_user(self):
        with pytest.raises(UnknownSubject):
            grant([], Subject.user("ghost"), Scope("group", "dev"), {Permission.VIEW}, self.directory)

    def test_grant_unknown_group_scope(self):
        with pytest.raises(UnknownScope):
            grant([], Subject.user("bob"), Scope("group", "ghosts"), {Permission.VIEW}, self.directory)

    def test_revoke_only_grant(self):
        entries = grant(
            [], Subject.user("bob"), Scope("home", "carol"), {Permission.VIEW}, self.directory
        )
        entries = revoke(entries, Subject.user("bob"), Scope("home", "carol"))
        decision = evaluate(BOB, Permission.VIEW, Scope("home", "carol"), entries)
        assert not decision.allow and decision.reason == "NO_GRANT"

    def test_revoke_missing_entry(self):
        with pytest.raises(NoSuchAclEntry):
            revoke([], Subject.user("bob"), Scope("group", "dev"))

    def test_revoke_leaves_other_grants(self):
        entries = grant(
            [], Subject.user("bob"), Scope("group", "dev"), {Permission.VIEW}, self.directory
        )
        entries = grant(
            entries, Subject.user("carol"), Scope("group", "dev"), {Permission.VIEW}, self.directory
        )
        entries = revoke(entries, Subject.user("bob"), Scope("group", "dev"))
        assert len(entries) == 1 and entries[0].subject == Subject.user("carol")

    def test_user_revoked_but_group_grant_remains(self):
        entries = list(FIXTURE_ENTRIES)
        entries = grant(
            entries, Subject.user("bob"), Scope("group", "dev"), {Permission.VIEW}, self.directory
        )
        entries = revoke(entries, Subject.user("bob"), Scope("group", "dev"))
        decision = evaluate(BOB, Permission.VIEW, Scope("group", "dev"), entries)
        assert decision.allow and decision.reason == "GRANTED"


class TestEffectivePermissions:
    def test_admin_everything(self):
        assert effective_permissions(ANN, Scope("group", "qa"), []) == set(Permission)

    def test_owner_everything(self):
        assert effective_permissions(BOB, Scope("home", "bob"), []) == set(Permission)

    def test_group_default_share(self):
        perms = effective_permissions(BOB, Scope("group", "dev"), FIXTURE_ENTRIES)
        assert perms == {Permission.VIEW, Permission.DOWNLOAD, Permission.UPLOAD}

    def test_outsider_nothing(self):
        assert effective_permissions(CAROL, Scope("home", "bob"), FIXTURE_ENTRIES) == set()


class TestParsing:
    def test_scope_round_trip(self):
        assert parse_scope("home:bob") == Scope("home", "bob")
        assert parse_scope("group:dev").render() == "group:dev"

    def test_subject_round_trip(self):
        assert parse_subject("user:bob") == Subject.user("bob")
        assert parse_subject("group:dev").render() == "group:dev"

    @pytest.mark.parametrize("bad", ["", "bob", "home:", "x:bob", "home:Bad Name", "home:UPPER"])
    def test_bad_scopes(self, bad):
        with pytest.raises(Exception):
            parse_scope(bad)

    def test_default_group_permissions_constant(self):
        assert DEFAULT_GROUP_PERMISSIONS == {
            Permission.VIEW,
            Permission.DOWNLOAD,
            Permission.UPLOAD,
        }


# -- properties ----------------------------------------------------------------

_names = st.sampled_from(["ann", "bob", "carol", "dave", "erin"])
_groups = st.sets(st.sampled_from(["dev", "qa", "ops"]), max_size=3)
_scopes = st.builds(
    Scope,
    st.sampled_from(["home", "group"]),
    st.sampled_from(["ann", "bob", "dev", "qa"]),
)
_perm_sets = st.sets(st.sampled_from(list(Permission)), min_size=1).map(frozenset)
_subjects = st.one_of(
    st.builds(Subject.user, _names), st.builds(Subject.group, st.sampled_from(["dev", "qa", "ops"]))
)
_entries = st.lists(st.builds(AclEntry, _subjects, _scopes, _perm_sets), max_size=6)
_principals = st.builds(
    make_principal,
    _names,
    role=st.sampled_from(["client", "administrator"]),
    status=st.sampled_from(["active", "suspended"]),
    groups=_groups,
)


@given(_principals, st.sampled_from(list(Permission)), _scopes, _entries, _subjects, _perm_sets)
def test_grant_monotonicity(principal, permission, scope, entries, subject, perms):
    """Widening a subject's permissions never flips an allow to a deny, and
    dropping an entry never flips a deny to an allow."""
    before = evaluate(principal, permission, scope, entries)

    widened, merged = [], False
    for entry in entries:
        if entry.subject == subject and entry.scope == scope:
            widened.append(AclEntry(subject, scope, entry.permissions | perms))
            merged = True
        else:
            widened.append(entry)
    if not merged:
        widened.append(AclEntry(subject, scope, perms))
    if before.allow:
        assert evaluate(principal, permission, scope, widened).allow

    if entries and not before.allow:
        for drop in range(len(entries)):
            shrunk = entries[:drop] + entries[drop + 1 :]
            assert not evaluate(principal, permission, scope, shrunk).allow


@given(_principals, st.sampled_from(list(Permission)), _scopes, _entries)
def test_evaluate_is_pure(principal, permission, scope, entries):
    first = evaluate(principal, permission, scope, entries)
    second = evaluate(principal, permission, scope, entries)
    assert first == second
    assert first.reason in RULES
