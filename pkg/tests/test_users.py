import pytest

from clusterec.errors import CatalogParseError, ValidationError
from clusterec.users import UserProfile, load_users, save_users


class TestUserProfile:
    def test_history_must_be_subset_of_viewed(self):
        with pytest.raises(ValidationError, match="missing from viewed"):
            UserProfile(user_id="u", history=[(0, "a")], viewed=set())

    def test_viewed_may_exceed_history(self):
        user = UserProfile(user_id="u", history=[(0, "a")],
                           viewed={"a", "b"})
        assert user.history_length == 1

    def test_record_round_trip(self):
        user = UserProfile(user_id="u1", prefs=["noir", "heist"],
                           history=[(0, "a"), (2, "b"), (0, "a")],
                           viewed={"a", "b"})
        back = UserProfile.from_record(user.to_record())
        assert back.user_id == user.user_id
        assert back.prefs == user.prefs
        assert back.history == user.history
        assert back.viewed == user.viewed


class TestUserStore:
    def _store(self):
        return {
            "u1": UserProfile(user_id="u1", prefs=["a"]),
            "u2": UserProfile(user_id="u2", prefs=["b"],
                              history=[(1, 5), (2, 6)], viewed={5, 6, 7}),
        }

    def test_save_load_round_trip_exact(self, tmp_path):
        path = tmp_path / "users.jsonl"
        save_users(self._store(), path)
        back = load_users(path)
        assert set(back) == {"u1", "u2"}
        assert back["u2"].history == [(1, 5), (2, 6)]
        assert back["u2"].viewed == {5, 6, 7}
        # second save is byte-identical (stable ordering throughout)
        path2 = tmp_path / "users2.jsonl"
        save_users(back, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_duplicate_user_rejected(self, tmp_path):
        path = tmp_path / "users.jsonl"
        record = '{"user_id": "u1", "prefs": [], "history": [], "viewed": []}'
        path.write_text(record + "\n" + record + "\n")
        with pytest.raises(CatalogParseError, match="duplicate"):
            load_users(path)

    def test_malformed_record_names_line(self, tmp_path):
        path = tmp_path / "users.jsonl"
        path.write_text('{"user_id": "u1", "prefs": [], "history": [], '
                        '"viewed": []}\nnot json\n')
        with pytest.raises(CatalogParseError, match="line 2"):
            load_users(path)
