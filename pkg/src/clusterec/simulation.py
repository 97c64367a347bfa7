"""Desk-scale experiment harness: simulated users, paired A/B judging, and
aggregated diversity/novelty results.

Simulated users replay contiguous slices of real rating histories. For each
user the harness generates one exploitation-only and one exploration-enabled
list from shared seeds, presents both (in randomized A/B order) to a judge,
and aggregates intra-list similarity, unexpectedness and preference
percentages per (k, h, configuration) cell into a CSV and a Markdown table.

The judge is pluggable: a deterministic offline stub that prefers the set
closer to the user's history, or any chat-completion HTTP endpoint.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .baselines import AlsRecommender, PopularityRecommender, RatingsMatrix
from .embedding import Catalog
from .errors import JudgeError, ValidationError
from .metrics import intra_list_similarity, unexpectedness
from .recommender import Recommender
from .users import UserProfile

CONFIGURATIONS = ("cold_start", "cf", "popularity", "ours_off", "ours_on")

CONFIG_LABELS = {
    "cold_start": "Cold Start",
    "cf": "Collaborative Filtering",
    "popularity": "Popularity-Based",
    "ours_off": "Ours (Exploration Off)",
    "ours_on": "Ours (Exploration On)",
}

SYSTEM_PROMPT = (
    "You are a movie enthusiast who recently watched: [{history}]. "
    "You must choose between two recommendation sets. Consider:\n"
    "1. Which set better matches your tastes.\n"
    "2. Which has more movies you'd actually watch."
)

USER_PROMPT = "Set A: [{set_a}].\n\nSet B: [{set_b}]. \n\nWhich set would you choose?"

CSV_HEADER = ["k", "h", "configuration", "ils", "unexp", "ab_pct", "n_valid",
              "seed", "judge"]

_AB_STREAM = 17


@dataclass
class SimulatedUser:
    """One profile replayed from a source user's positively rated items."""

    profile: UserProfile
    source_user_id: object
    h: int


@dataclass
class AbOutcome:
    """Judged preference between one user's exploit and explore lists."""

    user_id: str
    choice: str | None          # "A" | "B" | None when unparseable
    exploit_was: str            # which label the exploit-only list got
    judge: str
    raw_reply: str
    valid: bool

    @property
    def preferred(self) -> str | None:
        """"ours_off" or "ours_on" depending on the chosen label."""
        if not self.valid or self.choice is None:
            return None
        return "ours_off" if self.choice == self.exploit_was else "ours_on"


@dataclass
class JudgeSettings:
    kind: str = "stub"                      # "stub" | "llm"
    endpoint: str = ""
    api_key: str = ""
    model: str = ""
    temperature: float = 0.4
    max_retries: int = 3
    timeout: float = 30.0


@dataclass
class ExperimentConfig:
    k_values: list[int] = field(default_factory=lambda: [5, 10])
    h_values: list[int] = field(default_factory=lambda: [10, 50])
    n_users: int = 300
    catalog_size: int = 20000
    seed: int = 0
    min_rating: float = 3.5
    window_size: int = 50
    history_threshold: int = 10
    hash_seed: int = 0
    configurations: tuple = CONFIGURATIONS
    judge: JudgeSettings = field(default_factory=JudgeSettings)
    als_factors: int = 50
    als_iterations: int = 15
    als_reg: float = 0.1


class StubJudge:
    """Deterministic offline judge: prefers the set whose items sit closer
    to the user's history (mean over the set of the max similarity to any
    history item); exact ties go to A."""

    kind = "stub"

    def choose(self, history_embeddings, set_a_embeddings,
               set_b_embeddings) -> str:
        score_a = self._affinity(history_embeddings, set_a_embeddings)
        score_b = self._affinity(history_embeddings, set_b_embeddings)
        return "A" if score_a >= score_b else "B"

    @staticmethod
    def _affinity(history, candidates) -> float:
        H = np.vstack([np.asarray(h, dtype=np.float64) for h in history])
        C = np.vstack([np.asarray(c, dtype=np.float64) for c in candidates])
        if H.size == 0 or C.size == 0:
            raise ValidationError("stub judge needs non-empty embedding lists")
        H = H / np.linalg.norm(H, axis=1, keepdims=True)
        C = C / np.linalg.norm(C, axis=1, keepdims=True)
        return float((C @ H.T).max(axis=1).mean())


def stub_judge(history_embeddings, set_a_embeddings, set_b_embeddings) -> str:
    """Functional form of :class:`StubJudge`."""
    return StubJudge().choose(history_embeddings, set_a_embeddings,
                              set_b_embeddings)


class ChatCompletionJudge:
    """Generic chat-completion client used as the preference judge.

    POSTs an OpenAI-style payload (model, messages, temperature) to the
    configured endpoint and returns the first choice's message content.
    Configure via JudgeSettings or CLUSTEREC_JUDGE_URL / _API_KEY / _MODEL.
    """

    kind = "llm"

    def __init__(self, settings: JudgeSettings, transport=None):
        if not settings.endpoint or not settings.model:
            raise JudgeError(
                "llm judge needs an endpoint and model name "
                "(set CLUSTEREC_JUDGE_URL and CLUSTEREC_JUDGE_MODEL or the "
                "[judge] section of the experiment config)")
        self.settings = settings
        self.transport = transport

    @classmethod
    def from_env(cls, settings: JudgeSettings | None = None,
                 transport=None) -> "ChatCompletionJudge":
        settings = settings or JudgeSettings(kind="llm")
        settings.endpoint = settings.endpoint or os.environ.get(
            "CLUSTEREC_JUDGE_URL", "")
        settings.api_key = settings.api_key or os.environ.get(
            "CLUSTEREC_JUDGE_API_KEY", "")
        settings.model = settings.model or os.environ.get(
            "CLUSTEREC_JUDGE_MODEL", "")
        return cls(settings, transport=transport)

    def reply(self, system_prompt: str, user_prompt: str) -> str:
        import httpx

        headers = {}
        if self.settings.api_key:
            headers["Authorization"] = f"Bearer {self.settings.api_key}"
        payload = {
            "model": self.settings.model,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
            "temperature": self.settings.temperature,
        }
        try:
            with httpx.Client(timeout=self.settings.timeout,
                              transport=self.transport) as client:
                resp = client.post(self.settings.endpoint, json=payload,
                                   headers=headers)
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise JudgeError(f"judge request failed: {exc}") from exc


_CHOICE_RE = re.compile(r"\bset\s*([ab])\b", re.IGNORECASE)
_BARE_RE = re.compile(r"^\W*([ab])\W*$", re.IGNORECASE)


def parse_choice(reply: str) -> str | None:
    """Extract A or B from a judge reply; first explicit mention wins."""
    match = _CHOICE_RE.search(reply) or _BARE_RE.match(reply.strip())
    return match.group(1).upper() if match else None


def render_prompts(history_titles, set_a_titles, set_b_titles) -> tuple[str, str]:
    system = SYSTEM_PROMPT.format(history=", ".join(history_titles))
    user = USER_PROMPT.format(set_a=", ".join(set_a_titles),
                              set_b=", ".join(set_b_titles))
    return system, user


def run_ab_pair(recommender: Recommender, user: UserProfile, k: int, judge,
                seed, transcript=None) -> AbOutcome:
    """Generate one exploit/explore pair, randomize A/B labels, ask the judge.

    Both lists share the seed, so the explore list's exploit slots are a
    prefix of the exploit-only list and the comparison isolates the
    exploration effect. The label assignment is recorded for de-biasing.
    """
    catalog = recommender.catalog
    exploit = recommender.recommend_personalized(user, k, explore=False,
                                                 seed=seed)
    explore = recommender.recommend_personalized(user, k, explore=True,
                                                 seed=seed)
    rng = np.random.default_rng((seed, _AB_STREAM))
    exploit_was = "A" if rng.random() < 0.5 else "B"
    a_ids, b_ids = ((exploit.items, explore.items) if exploit_was == "A"
                    else (explore.items, exploit.items))

    history_titles = [catalog.get(i).title for _, i in user.history]
    system, user_prompt = render_prompts(
        history_titles,
        [catalog.get(i).title for i in a_ids],
        [catalog.get(i).title for i in b_ids])

    choice: str | None = None
    raw_reply = ""
    if getattr(judge, "kind", "stub") == "stub":
        history_emb = [catalog.embedding_of(i) for _, i in user.history]
        choice = judge.choose(history_emb,
                              [catalog.embedding_of(i) for i in a_ids],
                              [catalog.embedding_of(i) for i in b_ids])
        raw_reply = f"Set {choice}"
    else:
        for _ in range(max(1, judge.settings.max_retries)):
            try:
                raw_reply = judge.reply(system, user_prompt)
            except JudgeError:
                continue
            choice = parse_choice(raw_reply)
            if choice is not None:
                break

    outcome = AbOutcome(
        user_id=user.user_id,
        choice=choice,
        exploit_was=exploit_was,
        judge=getattr(judge, "kind", "stub"),
        raw_reply=raw_reply,
        valid=choice is not None,
    )
    if transcript is not None:
        transcript({
            "user_id": user.user_id,
            "k": k,
            "system": system,
            "user": user_prompt,
            "reply": raw_reply,
            "choice": choice,
            "exploit_was": exploit_was,
        })
    return outcome


def derive_prefs(catalog: Catalog, item_ids, limit: int = 3) -> list[str]:
    """Keyword preferences from the most frequent tags over given items."""
    freq: dict[str, int] = {}
    for item_id in item_ids:
        for tag in catalog.get(item_id).tags:
            freq[tag] = freq.get(tag, 0) + 1
    ranked = sorted(freq, key=lambda t: (-freq[t], t))
    if ranked:
        return ranked[:limit]
    first = catalog.get(item_ids[0]).title.split()[0].lower()
    return [first]


def build_simulated_users(ratings: RatingsMatrix, recommender: Recommender,
                          n: int, h: int, min_rating: float = 3.5,
                          seed=0) -> list[SimulatedUser]:
    """Sample n distinct raters and replay h-long contiguous slices of their
    qualifying (rating >= min_rating, clustered item) histories.

    Raises ValidationError naming the shortfall when fewer than n raters
    qualify.
    """
    model = recommender.model
    qualifying: list[tuple[object, list]] = []
    for uid in ratings.user_ids:
        events = [e for e in ratings.events_of_user(uid)
                  if e[1] >= min_rating and model.has_item(e[0])]
        if len(events) >= h:
            qualifying.append((uid, events))
    if len(qualifying) < n:
        raise ValidationError(
            f"need {n} users with >= {h} qualifying ratings, "
            f"found {len(qualifying)} (shortfall {n - len(qualifying)})")

    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(qualifying), size=n, replace=False)
    users = []
    for pick in chosen:
        uid, events = qualifying[int(pick)]
        start = int(rng.integers(0, len(events) - h + 1))
        window = events[start:start + h]
        profile = UserProfile(user_id=f"sim{uid}")
        for item_id, _, _ in window:
            recommender.record_interaction(profile, item_id)
        profile.prefs = derive_prefs(recommender.catalog,
                                     [i for i, _, _ in window])
        users.append(SimulatedUser(profile=profile, source_user_id=uid, h=h))
    return users


def _format_cell(value) -> str:
    return "-" if value is None else f"{value:.6f}"


def run_experiment(config: ExperimentConfig, catalog: Catalog, model,
                   ratings: RatingsMatrix, out_dir) -> dict:
    """Produce the full results grid and write results.csv / table.md /
    judge_log.jsonl under out_dir.

    Returns a summary with the result rows, the invalid-outcome count and
    any cells left empty. Deterministic (byte-identical outputs) for fixed
    seeds with the stub judge.
    """
    judge = _make_judge(config.judge)
    os.makedirs(out_dir, exist_ok=True)

    recommender = Recommender(
        model, catalog,
        history_threshold=config.history_threshold,
        window_size=config.window_size)

    needs_cf = "cf" in config.configurations
    needs_pop = "popularity" in config.configurations
    als = None
    if needs_cf:
        als = AlsRecommender(n_factors=config.als_factors,
                             n_iterations=config.als_iterations,
                             reg=config.als_reg,
                             random_state=config.seed).fit(ratings)
    pop = PopularityRecommender().fit(catalog, ratings) if needs_pop else None

    transcript_rows: list[dict] = []
    rows: list[dict] = []
    empty_cells: list[tuple] = []
    invalid_outcomes = 0

    for h in config.h_values:
        try:
            users = build_simulated_users(
                ratings, recommender, config.n_users, h,
                min_rating=config.min_rating, seed=(config.seed, h))
        except ValidationError:
            for k in config.k_values:
                for name in config.configurations:
                    rows.append(_empty_row(k, h, name, config))
                    empty_cells.append((k, h, name))
            continue

        for k in config.k_values:
            ils_acc = {name: [] for name in config.configurations}
            unexp_acc = {name: [] for name in config.configurations}
            outcomes: list[AbOutcome] = []
            judged = ("ours_off" in config.configurations
                      and "ours_on" in config.configurations)

            for u_idx, su in enumerate(users):
                user_seed = (config.seed, h, k, u_idx)
                history_emb = [catalog.embedding_of(i)
                               for _, i in su.profile.history]
                for name in config.configurations:
                    ids = _generate(name, recommender, als, pop, su, k,
                                    user_seed)
                    if ids is None:
                        continue
                    if len(ids) >= 2:
                        ils_acc[name].append(intra_list_similarity(
                            [catalog.embedding_of(i) for i in ids]))
                    if name != "cold_start" and ids:
                        unexp_acc[name].append(unexpectedness(
                            [catalog.embedding_of(i) for i in ids],
                            history_emb))
                if judged:
                    outcome = run_ab_pair(recommender, su.profile, k, judge,
                                          seed=user_seed,
                                          transcript=transcript_rows.append)
                    outcomes.append(outcome)
                    if not outcome.valid:
                        invalid_outcomes += 1

            valid = [o for o in outcomes if o.valid]
            for name in config.configurations:
                ab_pct = None
                n_valid = len(ils_acc[name])
                if name in ("ours_off", "ours_on") and judged and valid:
                    pref = sum(1 for o in valid if o.preferred == name)
                    ab_pct = 100.0 * pref / len(valid)
                    n_valid = len(valid)
                ils = (float(np.mean(ils_acc[name]))
                       if ils_acc[name] else None)
                unexp = (float(np.mean(unexp_acc[name]))
                         if unexp_acc[name] else None)
                if ils is None and unexp is None and ab_pct is None:
                    empty_cells.append((k, h, name))
                rows.append({
                    "k": k, "h": h, "configuration": name,
                    "ils": ils, "unexp": unexp, "ab_pct": ab_pct,
                    "n_valid": n_valid, "seed": config.seed,
                    "judge": config.judge.kind,
                })

    _write_csv(rows, os.path.join(out_dir, "results.csv"))
    _write_markdown(rows, os.path.join(out_dir, "table.md"), config)
    with open(os.path.join(out_dir, "judge_log.jsonl"), "w",
              encoding="utf-8") as fh:
        for entry in transcript_rows:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    return {
        "rows": rows,
        "invalid_outcomes": invalid_outcomes,
        "empty_cells": empty_cells,
    }


def _make_judge(settings: JudgeSettings):
    if settings.kind == "stub":
        return StubJudge()
    if settings.kind == "llm":
        return ChatCompletionJudge.from_env(settings)
    raise JudgeError(f"unknown judge kind {settings.kind!r}")


def _generate(name, recommender, als, pop, su: SimulatedUser, k, user_seed):
    """Recommendation ids for one configuration, or None when inapplicable."""
    if name == "cold_start":
        if not su.profile.prefs:
            return None
        cold = UserProfile(user_id=f"{su.profile.user_id}-cold",
                           prefs=list(su.profile.prefs))
        return recommender.recommend_cold_start(cold, k, seed=user_seed).items
    if name == "cf":
        return als.recommend(su.source_user_id, k, viewed=su.profile.viewed)
    if name == "popularity":
        return pop.recommend(su.profile, k)
    if name == "ours_off":
        return recommender.recommend_personalized(
            su.profile, k, explore=False, seed=user_seed).items
    if name == "ours_on":
        return recommender.recommend_personalized(
            su.profile, k, explore=True, seed=user_seed).items
    raise ValidationError(f"unknown configuration {name!r}")


def _empty_row(k, h, name, config: ExperimentConfig) -> dict:
    return {"k": k, "h": h, "configuration": name, "ils": None, "unexp": None,
            "ab_pct": None, "n_valid": 0, "seed": config.seed,
            "judge": config.judge.kind}


def _write_csv(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for row in rows:
            fh.write(",".join([
                str(row["k"]), str(row["h"]), row["configuration"],
                _format_cell(row["ils"]), _format_cell(row["unexp"]),
                _format_cell(row["ab_pct"]), str(row["n_valid"]),
                str(row["seed"]), row["judge"],
            ]) + "\n")


def _write_markdown(rows: list[dict], path, config: ExperimentConfig) -> None:
    lines = [
        "| k | h | Configuration | ILS | Unexp | A/B Preference (%) |",
        "|---|---|---------------|-----|-------|--------------------|",
    ]
    for row in rows:
        label = CONFIG_LABELS.get(row["configuration"], row["configuration"])
        ils = "-" if row["ils"] is None else f"{row['ils']:.2f}"
        unexp = "-" if row["unexp"] is None else f"{row['unexp']:.2f}"
        ab = "-" if row["ab_pct"] is None else f"{row['ab_pct']:.1f}"
        lines.append(f"| {row['k']} | {row['h']} | {label} | {ils} | "
                     f"{unexp} | {ab} |")
    lines.append("")
    lines.append(f"seed={config.seed} judge={config.judge.kind} "
                 f"n_users={config.n_users} "
                 f"window_size={config.window_size} "
                 f"history_threshold={config.history_threshold}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
