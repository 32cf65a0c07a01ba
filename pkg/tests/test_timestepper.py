import numpy as np
import pytest

from beamstab import timestepper
from beamstab.diagnostics import TraceRecorder, energy
from beamstab.discretization import SimState, interpolate
from beamstab.errors import InvalidArgumentError, StepFailureError
from beamstab.fields import sine_field
from beamstab.feedback import saturating_law
from beamstab.timestepper import (StepControl, integrate, load_checkpoint,
                                  save_checkpoint, step)

from conftest import make_conservative_system, make_system


def _sine_state(system, velocity=0.0):
    u = interpolate(system, sine_field(system.mesh))
    du = velocity * u
    return SimState(0.0, u, 0.5 * u, du, np.zeros_like(u))


class TestStepControl:
    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            StepControl(dt=0.0)
        with pytest.raises(InvalidArgumentError):
            StepControl(dt=0.1, newton_tol=0.0)
        with pytest.raises(InvalidArgumentError):
            StepControl(dt=0.1, newton_max=0)


class TestStep:
    def test_equilibrium_is_fixed(self):
        system = make_system(nodes=7)
        n = system.n_nodes
        state = SimState(3.0, *(np.zeros(n) for _ in range(4)))
        out = step(system, state, StepControl(dt=0.1))
        assert out.t == pytest.approx(3.1)
        for name in ("u", "v", "du", "dv"):
            assert np.all(getattr(out, name) == 0.0)

    def test_single_step_conserves_energy(self):
        # decoupled undamped system on the 3-node mesh: the midpoint rule
        # preserves the quadratic invariant exactly
        system = make_conservative_system(nodes=3)
        state = _sine_state(system)
        before = energy(system, state)
        after = energy(system, step(system, state, StepControl(dt=0.05)))
        assert after == pytest.approx(before, rel=1e-12)

    def test_self_convergence_second_order(self):
        system = make_system(nodes=21)
        state0 = _sine_state(system)
        T = 0.5
        dts = (0.0125, 0.00625, 0.003125)
        finals = {dt: integrate(system, state0, T, StepControl(dt=dt))
                  for dt in dts + (dts[-1] / 32,)}
        ref = finals[dts[-1] / 32]
        errs = [sum(np.linalg.norm(getattr(finals[dt], nm) - getattr(ref, nm))
                    for nm in ("u", "v", "du", "dv")) for dt in dts]
        ratios = [a / b for a, b in zip(errs, errs[1:])]
        for r in ratios:
            assert 3.2 < r < 4.8  # ~4x error reduction per dt halving

    def test_newton_failure_raises(self):
        system = make_system(nodes=7, law1=saturating_law(1.0, 2.0),
                             law2=saturating_law(1.0, 2.0))
        state = _sine_state(system, velocity=1.0)
        control = StepControl(dt=50.0, newton_max=1, fallback=False)
        with pytest.raises(StepFailureError) as err:
            step(system, state, control)
        assert err.value.t == 0.0
        assert err.value.residual > 0


class TestIntegrate:
    def test_zero_span_single_sample(self):
        system = make_system(nodes=7)
        rec = TraceRecorder(system)
        final = integrate(system, _sine_state(system), 0.0, StepControl(dt=0.1),
                          observers=(rec,))
        assert final.t == 0.0
        assert len(rec.trace()) == 1

    def test_backwards_time_rejected(self):
        system = make_system(nodes=7)
        state = _sine_state(system)
        state.t = 1.0
        with pytest.raises(InvalidArgumentError):
            integrate(system, state, 0.5, StepControl(dt=0.1))

    def test_deterministic_repetition(self):
        system = make_system(nodes=11)
        traces = []
        for _ in range(2):
            rec = TraceRecorder(system)
            integrate(system, _sine_state(system), 0.2, StepControl(dt=0.01),
                      observers=(rec,))
            traces.append(rec.trace())
        assert np.array_equal(traces[0].E, traces[1].E)
        assert np.array_equal(traces[0].G, traces[1].G)

    def test_conservative_drift_stays_tiny(self):
        system = make_conservative_system(nodes=11)
        rec = TraceRecorder(system)
        integrate(system, _sine_state(system), 1.0, StepControl(dt=0.001),
                  observers=(rec,))
        trace = rec.trace()
        assert np.max(np.abs(trace.E - trace.E[0])) <= 1e-10 * trace.E[0]


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        system = make_system(nodes=9)
        state = integrate(system, _sine_state(system), 0.3, StepControl(dt=0.01))
        path = tmp_path / "state.ckpt"
        save_checkpoint(path, state, config_hash="abc123")
        back, h = load_checkpoint(path)
        assert h == "abc123"
        assert back.t == state.t
        for name in ("u", "v", "du", "dv"):
            assert np.array_equal(getattr(back, name), getattr(state, name))

    def test_restart_equivalence(self, tmp_path):
        system = make_system(nodes=11)
        control = StepControl(dt=0.01)
        straight = integrate(system, _sine_state(system), 1.0, control)

        mid = integrate(system, _sine_state(system), 0.5, control)
        path = tmp_path / "mid.ckpt"
        save_checkpoint(path, mid)
        resumed, _ = load_checkpoint(path)
        final = integrate(system, resumed, 1.0, control)

        assert final.t == pytest.approx(straight.t, abs=1e-12)
        for name in ("u", "v", "du", "dv"):
            diff = np.max(np.abs(getattr(final, name) - getattr(straight, name)))
            assert diff <= 1e-12

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_text("something else\n")
        with pytest.raises(InvalidArgumentError):
            load_checkpoint(path)

    def test_rejects_truncated_file(self, tmp_path):
        path = tmp_path / "short.ckpt"
        path.write_text(timestepper.CHECKPOINT_HEADER + "\nconfig x\nt 0\n")
        with pytest.raises(InvalidArgumentError):
            load_checkpoint(path)
