import numpy as np
import pytest
import yaml

from gneseek.analysis import certify, oracle_vgne
from gneseek.convex_sets import FullSpace
from gneseek.game import estimate_constants
from gneseek.network import GraphError
from gneseek.scenarios import (
    BUILTIN, SENSOR_R, ScenarioError, builtin_scenario, dump_scenario, game_to_dict, load_scenario,
    random_quadratic_game, resolve_scenario, scenario_from_dict, scenario_to_dict,
    sensor_network_game, sensor_network_scenario,
)

RING5 = [(i, i % 5 + 1, 1.0) for i in range(1, 6)]


class TestSensorNetwork:
    def test_edge_rows(self):
        g = sensor_network_game(np.zeros((5, 2)), edges=[(1, 2, 1.0)])
        A = g.A
        # x1 - x2, x2 - x1, y1 - y2, y2 - y1, all <= 0.2
        expect = np.zeros((4, 10))
        expect[0, [0, 2]] = [1, -1]
        expect[1, [0, 2]] = [-1, 1]
        expect[2, [1, 3]] = [1, -1]
        expect[3, [1, 3]] = [-1, 1]
        assert np.array_equal(A, expect)
        assert np.allclose(g.b, 0.2)

    def test_structure(self):
        s = sensor_network_scenario()
        g = s.game
        assert g.N == 5 and list(g.dims) == [2] * 5 and g.m == 20
        assert s.params.c == 30.0
        assert np.allclose(g.omega.lower.reshape(5, 2)[:, 1], 0.1)
        assert np.allclose(g.omega.upper.reshape(5, 2)[:, 1], 0.5)
        assert np.all(np.isinf(g.omega.lower.reshape(5, 2)[:, 0]))
        assert sorted(s.graph.edges()) == sorted((min(i, j), max(i, j), w) for i, j, w in RING5)
        assert np.array_equal(np.array(SENSOR_R), [a.cost.q[2 * i:2 * i + 2] for i, a in enumerate(g.agents)])
        d = s.double_game()
        assert all(isinstance(a.omega, FullSpace) for a in d.agents) and d.m == 30

    def test_builtin_matches_constructor(self):
        a, b = builtin_scenario("sensor-network"), sensor_network_scenario()
        assert np.array_equal(a.game.A, b.game.A) and np.array_equal(a.x0, b.x0)
        assert np.array_equal(a.v0, b.v0)

    def test_zero_r_makes_box_active(self):
        g = sensor_network_game(np.zeros((5, 2)), edges=RING5)
        rep = oracle_vgne(g)
        assert np.allclose(rep.x.reshape(5, 2), [[0.0, 0.1]] * 5, atol=1e-8)

    def test_wrong_r_count(self):
        with pytest.raises(ScenarioError):
            sensor_network_scenario(r=[[0, 0]] * 4)

    def test_certificate_recorded(self):
        s = sensor_network_scenario()
        cert = certify(s.game, s.graph, s.params.c, warn=False)
        s5 = 12 + np.sqrt(116)
        assert cert.mu == pytest.approx(2.0) and cert.theta0 == pytest.approx(12.0)
        assert cert.c_min == pytest.approx((s5 ** 2 + 8 * np.sqrt(116)) / (8 * (2 - 2 * np.cos(2 * np.pi / 5))))
        assert cert.satisfied is False


class TestRandomGames:
    @pytest.mark.parametrize("seed", range(10))
    def test_guarantees(self, seed):
        s = random_quadratic_game(2 + seed % 5, n_i=1 + seed % 2, m=seed % 4, mu_target=0.7, seed=seed)
        g = s.game
        mu, _, _ = estimate_constants(g)
        assert mu >= 0.7 * (1 - 1e-6)
        assert np.all(g.A @ s.interior_point < g.b)
        assert g.omega.contains(s.interior_point, tol=0.0)
        assert s.graph.lambda2 > 0
        assert oracle_vgne(g).kkt_residual <= 1e-10
        assert certify(g, s.graph, s.params.c, warn=False).satisfied

    def test_seed_stability(self):
        a, b = random_quadratic_game(4, m=2, seed=3), random_quadratic_game(4, m=2, seed=3)
        assert yaml.safe_dump(game_to_dict(a.game)) == yaml.safe_dump(game_to_dict(b.game))
        assert dump_scenario(a) == dump_scenario(b)
        c = random_quadratic_game(4, m=2, seed=4)
        assert dump_scenario(a) != dump_scenario(c)

    def test_bad_mu(self):
        with pytest.raises(ValueError):
            random_quadratic_game(3, mu_target=0.0)


class TestConfig:
    def test_round_trip(self, tmp_path):
        s = random_quadratic_game(3, n_i=2, m=2, seed=9)
        path = tmp_path / "s.yaml"
        path.write_text(dump_scenario(s))
        t = load_scenario(path)
        assert np.array_equal(t.game.jacobian, s.game.jacobian)
        assert np.array_equal(t.game.A, s.game.A) and np.array_equal(t.game.b, s.game.b)
        assert np.array_equal(t.game.omega.lower, s.game.omega.lower)
        assert np.array_equal(t.x0, s.x0) and t.params == s.params
        assert dump_scenario(t) == dump_scenario(s)

    def test_sensor_round_trip(self):
        s = sensor_network_scenario()
        t = scenario_from_dict(yaml.safe_load(dump_scenario(s)))
        assert np.array_equal(t.game.A, s.game.A) and np.array_equal(t.x0, s.x0)

    @pytest.mark.parametrize("name", sorted(BUILTIN))
    def test_builtins_load(self, name):
        s = resolve_scenario(name)
        assert s.name == name

    def test_two_agent_builtins(self):
        s = builtin_scenario("twoagent-coupled")
        assert np.array_equal(s.game.A, [[1, 1]]) and np.allclose(s.game.b, [0.5])
        assert builtin_scenario("twoagent").game.m == 0

    def test_user_constants(self):
        d = scenario_to_dict(builtin_scenario("twoagent"))
        d["game"]["constants"] = {"mu": 1.0, "theta0": 3.0, "theta": 3.0}
        s = scenario_from_dict(d)
        assert (s.game.mu, s.game.theta0, s.game.theta) == (1.0, 3.0, 3.0)
        assert scenario_to_dict(s)["game"]["constants"]["theta"] == 3.0
        d["game"]["constants"]["bogus"] = 1.0
        with pytest.raises(ScenarioError):
            scenario_from_dict(d)

    def test_overrides(self):
        s = builtin_scenario("sensor-network").with_overrides(c=1.0, t_max=5.0, mode="single")
        assert s.params.c == 1.0 and s.params.t_max == 5.0 and s.mode == "single"
        q = builtin_scenario("twoagent").with_overrides(stride=3, seed=5)
        assert q.params.stride == 3 and q.seed == 5
        with pytest.raises(ScenarioError):
            q.with_overrides(gamma=1.0)

    def test_errors(self, tmp_path):
        d = scenario_to_dict(builtin_scenario("twoagent"))
        with pytest.raises(ScenarioError, match="schema_version"):
            scenario_from_dict({**d, "schema_version": 99})
        with pytest.raises(ScenarioError, match="graph"):
            scenario_from_dict({k: v for k, v in d.items() if k != "graph"})
        with pytest.raises(GraphError):
            scenario_from_dict({**d, "graph": {"N": 3, "edges": [[1, 2, 1.0]]}})
        with pytest.raises(ScenarioError):
            resolve_scenario("no-such-scenario")
        bad = tmp_path / "bad.yaml"
        bad.write_text("game: [unclosed")
        with pytest.raises(ScenarioError):
            load_scenario(bad)

    def test_double_mode_needs_free_sets(self):
        d = scenario_to_dict(random_quadratic_game(3, seed=1))
        d["dualize"] = False
        with pytest.raises(ScenarioError, match="dualize"):
            scenario_from_dict(d)
        d["mode"] = "single"
        scenario_from_dict(d)
