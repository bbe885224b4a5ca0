"""Invariant checks over a finished tournament report, shared by unit and acceptance tests."""
import json


def conservation(report):
    for snap in report.bracket:
        n = sum(len(snap[k]) for k in ("main", "loser", "eliminated", "advanced"))
        assert n == snap["entering"], snap


def disjoint(report):
    for snap in report.bracket:
        seen = set()
        for key in ("main", "loser", "eliminated", "advanced"):
            ids = set(snap[key])
            assert len(ids) == len(snap[key]), snap
            assert not ids & seen, snap
            seen |= ids


def multi_winner(report, d):
    for tr in report.regions:
        if not tr.best_scores:
            continue
        floor = tr.best_scores[tr.leader] - d / 100.0
        expected = {p for p, s in tr.best_scores.items() if s >= floor} | {tr.leader}
        assert set(tr.winners) == expected, tr


def coverage(report):
    for tr in report.regions:
        if tr.path == "coverage":
            assert len(tr.played) == tr.size, tr


def cost_additive(report):
    total = sum(g.cost for g in report.games)
    assert abs(report.ledger.total - total) <= 1e-9 * max(1.0, total)
    assert report.ledger.games == len(report.games)


def fingerprint(report):
    return json.dumps(report.records(), sort_keys=True) + json.dumps(report.summary(),
                                                                     sort_keys=True)


def check_all(report, cfg):
    conservation(report)
    disjoint(report)
    if cfg.regional_companions:
        multi_winner(report, cfg.d)
    coverage(report)
    cost_additive(report)
