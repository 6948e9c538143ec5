import numpy as np
import pytest

from quantplan import (
    CEMConfig,
    PlannerBudget,
    ValidationError,
    apply_policy,
    policy_for_name,
    render,
    sample_episode_specs,
)
from quantplan import rng as qrng
from quantplan.env import EpisodeSpec
from quantplan.nn import Stack, WorldModel, init_world_model
from quantplan.planner import (
    EPISODES_CSV_HEADER,
    PreparedVariant,
    episodes_to_csv,
    plan_actions,
    read_episodes_csv,
    run_episode,
    run_paired_eval,
    write_episodes_csv,
)

BA = PlannerBudget(9, 2, 2)
BB = PlannerBudget(12, 3, 3)


@pytest.fixture(scope="module")
def prepared(trained_model):
    base = trained_model.to_model()

    def make(name):
        return PreparedVariant.from_variant_model(
            apply_policy(base, policy_for_name(name), name)
        )

    return {n: make(n) for n in ("fp16", "uniform_int8", "uniform_int3")}


def test_plan_deterministic(trained_model, env_cfg):
    obs = render(np.array([0.2, 0.5]), env_cfg)
    goal = render(np.array([0.8, 0.5]), env_cfg)
    p1, _ = plan_actions(trained_model, obs, goal, BA, CEMConfig(), qrng.stream(0, "t"), 0.125)
    p2, _ = plan_actions(trained_model, obs, goal, BA, CEMConfig(), qrng.stream(0, "t"), 0.125)
    np.testing.assert_array_equal(p1, p2)
    assert p1.shape == (9, 2)
    assert np.all(np.abs(p1) <= 0.125)


def test_elite_costs_non_increasing(trained_model, env_cfg):
    obs = render(np.array([0.2, 0.5]), env_cfg)
    goal = render(np.array([0.8, 0.5]), env_cfg)
    for k in range(10):
        _, info = plan_actions(
            trained_model, obs, goal, PlannerBudget(6, 5, 1), CEMConfig(), qrng.stream(0, "e", k), 0.125
        )
        costs = info["elite_costs"]
        assert all(a >= b for a, b in zip(costs, costs[1:]))
        assert info["final_mean_cost"] <= info["initial_mean_cost"]


def test_identity_predictor_zero_cost(env_cfg):
    wm = init_world_model(obs_dim=256)
    W = np.zeros((16, 18))
    W[:, :16] = np.eye(16)
    wm.predictor = Stack([(W, np.zeros(16))])
    obs = render(np.array([0.3, 0.3]), env_cfg)
    _, info = plan_actions(wm, obs, obs, BA, CEMConfig(), qrng.stream(0, "i"), 0.125)
    assert info["final_mean_cost"] == pytest.approx(0.0, abs=1e-12)
    assert info["final_mean_cost"] <= info["initial_mean_cost"]


def test_immediate_success(prepared, trained_model, env_cfg):
    spec = EpisodeSpec(0, 0, (0.48, 0.5), (0.52, 0.5), 0.04)
    r = run_episode(prepared["fp16"], trained_model, spec, BA, "bA", CEMConfig(), env_cfg)
    assert r.success == 1 and r.steps_executed == 0
    assert r.mean_state_distance == 0.0 and r.visual_embedding_divergence == 0.0


def test_step_caps(prepared, trained_model, env_cfg):
    spec = sample_episode_specs(0, 1, env_cfg)[0]
    for budget, name, cap in ((BA, "bA", 18), (BB, "bB", 36)):
        r = run_episode(prepared["uniform_int3"], trained_model, spec, budget, name, CEMConfig(), env_cfg)
        assert r.steps_executed <= cap
    assert BA.goal_h * BA.max_iter == 18
    assert BB.goal_h * BB.max_iter == 36


def test_fp16_divergence_exactly_zero(prepared, trained_model, env_cfg):
    for spec in sample_episode_specs(1, 3, env_cfg):
        r = run_episode(prepared["fp16"], trained_model, spec, BA, "bA", CEMConfig(), env_cfg)
        assert r.visual_embedding_divergence == 0.0


def test_paired_eval_counts_and_pairing(prepared, trained_model, env_cfg):
    rs = run_paired_eval(
        [prepared["fp16"], prepared["uniform_int8"]],
        trained_model,
        {"bA": (BA, [0, 1]), "bB": (BB, [0])},
        env_cfg,
        CEMConfig(),
        episodes_per_run=3,
    )
    assert len(rs.records) == 2 * (2 + 1) * 3
    units = {}
    for r in rs.records:
        units.setdefault(r.variant_name, set()).add(
            (r.budget_name, r.seed, r.episode_id, r.initial_goal_distance)
        )
    assert units["fp16"] == units["uniform_int8"]


def test_same_weights_two_names_identical_records(prepared, trained_model, env_cfg):
    twin = PreparedVariant("fp16_twin", prepared["fp16"].wm, prepared["fp16"].size_bytes)
    rs = run_paired_eval(
        [prepared["fp16"], twin],
        trained_model,
        {"bA": (BA, [0])},
        env_cfg,
        CEMConfig(),
        episodes_per_run=4,
    )
    a = [r for r in rs.records if r.variant_name == "fp16"]
    b = [r for r in rs.records if r.variant_name == "fp16_twin"]
    for ra, rb in zip(a, b):
        assert (ra.seed, ra.episode_id) == (rb.seed, rb.episode_id)
        for f in ("success", "steps_executed", "runtime_seconds",
                  "mean_state_distance", "visual_embedding_divergence"):
            assert getattr(ra, f) == getattr(rb, f)


def test_duplicate_variant_names_rejected(prepared, trained_model, env_cfg):
    with pytest.raises(ValidationError, match="duplicate"):
        run_paired_eval(
            [prepared["fp16"], prepared["fp16"]],
            trained_model,
            {"bA": (BA, [0])},
            env_cfg,
            CEMConfig(),
        )
    with pytest.raises(ValidationError):
        run_paired_eval([], trained_model, {"bA": (BA, [0])}, env_cfg, CEMConfig())


def test_csv_round_trip(prepared, trained_model, env_cfg, tmp_path):
    rs = run_paired_eval(
        [prepared["fp16"]], trained_model, {"bA": (BA, [0])}, env_cfg, CEMConfig(),
        episodes_per_run=2,
    )
    path = tmp_path / "episodes.csv"
    write_episodes_csv(rs.records, path)
    text = path.read_text()
    assert text.splitlines()[0] == EPISODES_CSV_HEADER
    back = read_episodes_csv(path)
    assert back == rs.records


def test_rerun_bit_identical(prepared, trained_model, env_cfg):
    def once():
        rs = run_paired_eval(
            [prepared["uniform_int8"]], trained_model, {"bA": (BA, [0])}, env_cfg,
            CEMConfig(), episodes_per_run=3,
        )
        return episodes_to_csv(rs.records)

    assert once() == once()


def test_budget_validation():
    with pytest.raises(ValidationError):
        PlannerBudget(0, 1, 1)
    with pytest.raises(ValidationError):
        CEMConfig(population=2)
    with pytest.raises(ValidationError):
        CEMConfig(elite_fraction=0.9)
