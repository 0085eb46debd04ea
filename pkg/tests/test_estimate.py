"""DFT bookkeeping, the banded regressor, and the regularized solve."""

import dataclasses
import math

import numpy as np
import pytest

from htfid import (
    ChirpPlan,
    EstimationProblem,
    ExperimentRecord,
    IllConditionedError,
    InvalidInputError,
    NoDataError,
    Trajectory,
    build_regressor,
    cost,
    estimate_htf,
    gen_chirp,
    run_experiments,
    second_difference,
    spectra,
)

from conftest import relerr


def lti_frf(w):
    """Stable second-order reference plant used for synthetic records."""
    return 1.0 / (200.0 - w**2 + 0.6j * w)


def make_record(u, x, clock_phase, dt=1e-3, index=0):
    zeros = np.zeros_like(u)
    traj = Trajectory(dt=dt, t0=0.0, x=x, xdot=zeros, u=u, chart=zeros)
    return ExperimentRecord(index=index, clock_phase=clock_phase, traj=traj)


def lti_chirp_spectra(n_records=9):
    """Chirp records passed through the LTI reference plant exactly.

    The response is synthesized in the frequency domain, i.e. as the
    periodic steady state of the repeated chirp -- the same structure
    run_experiments produces after its warm-up play.
    """
    dt = 1e-3
    u = gen_chirp(ChirpPlan(), 0, dt)
    freq = 2.0 * math.pi * np.fft.fftfreq(u.size, dt)
    x = np.fft.ifft(lti_frf(freq) * np.fft.fft(u)).real
    return [
        spectra(make_record(u, x, k / n_records, dt, index=k))
        for k in range(n_records)
    ]


def flat_spectrum_spectra():
    """Three short records with a perfectly flat band spectrum."""
    n, dt = 3000, 1e-3
    U = np.zeros(n, dtype=complex)
    for q in range(1, 31):  # (0, 10] Hz at 1/3 Hz spacing
        U[q] = 1.0 - 0.5j
        U[n - q] = np.conj(U[q])
    u = (np.fft.ifft(U) * n).real
    freq = 2.0 * math.pi * np.fft.fftfreq(n, dt)
    x = (np.fft.ifft(lti_frf(freq) * U) * n).real
    return [spectra(make_record(u, x, k / 3.0, dt, index=k)) for k in range(3)]


# ---------------------------------------------------------------- spectra


def test_spectra_sinusoid_lands_in_one_bin():
    n, dt = 3000, 1e-3
    t = np.arange(n) * dt
    u = np.sin(2.0 * math.pi * 2.0 * t)  # bin 6 of a 3 s record
    rec = spectra(make_record(u, np.zeros(n), 0.0, dt))
    assert abs(rec.U[6] - (-0.5j)) < 1e-12
    off = np.abs(np.delete(rec.U, [6, n - 6]))
    assert np.max(off) < 1e-12


def test_spectra_parseval(lab_records, lab_spectra):
    # with the 1/n normalization the identity picks up the duration
    u = lab_records[0].traj.u
    rec = lab_spectra[0]
    lhs = float(np.sum(u**2) * 1e-3)
    rhs = rec.duration * float(np.sum(np.abs(rec.U) ** 2))
    assert abs(lhs - rhs) / lhs < 1e-9


def test_spectra_grid_properties(lab_spectra):
    rec = lab_spectra[0]
    assert rec.n_bins == 30000
    assert rec.bin_spacing == pytest.approx(2.0 * math.pi / 30.0, rel=1e-12)
    assert rec.duration == pytest.approx(30.0, rel=1e-12)


def test_spectra_rejects_nonfinite():
    u = np.ones(100)
    x = np.ones(100)
    x[3] = np.nan
    with pytest.raises(InvalidInputError):
        spectra(make_record(u, x, 0.0))


# ------------------------------------------------------------- regressor


def test_problem_validation(lab_spectra):
    with pytest.raises(InvalidInputError):
        EstimationProblem(records=lab_spectra[:6], n_harmonics=3, pump=2 * math.pi)
    with pytest.raises(InvalidInputError):
        EstimationProblem(records=lab_spectra, n_harmonics=3, pump=-1.0)
    with pytest.raises(InvalidInputError):
        EstimationProblem(
            records=lab_spectra, n_harmonics=3, pump=2 * math.pi, alpha=-1.0
        )
    # pump period not commensurate with the record duration
    with pytest.raises(InvalidInputError):
        EstimationProblem(records=lab_spectra, n_harmonics=3, pump=2.0)
    # harmonic shifts would run past the Nyquist frequency
    with pytest.raises(InvalidInputError):
        EstimationProblem(
            records=lab_spectra,
            n_harmonics=3,
            pump=2 * math.pi,
            band_hz=(0.0, 499.0),
        )


def test_regressor_shapes_and_zero_record(lab_spectra):
    silent = dataclasses.replace(
        lab_spectra[0], U=np.zeros_like(lab_spectra[0].U)
    )
    problem = EstimationProblem(
        records=[silent] + lab_spectra[1:],
        n_harmonics=3,
        pump=2.0 * math.pi,
    )
    Phi, y = build_regressor(problem, 2.0 * math.pi / 30.0 * 100)
    assert Phi.shape == (9, 7) and y.shape == (9,)
    # a record with no input energy contributes an all-zero row
    assert not Phi[0].any()
    # at bin 100 every shifted line is in band, so live rows are dense
    assert np.all(np.abs(Phi[1:]) > 0)


def test_regressor_snaps_to_nearest_bin(lab_spectra):
    problem = EstimationProblem(
        records=lab_spectra, n_harmonics=3, pump=2.0 * math.pi
    )
    spacing = lab_spectra[0].bin_spacing
    Phi_a, y_a = build_regressor(problem, 100.0 * spacing)
    Phi_b, y_b = build_regressor(problem, 100.4 * spacing)
    assert np.array_equal(Phi_a, Phi_b)
    assert np.array_equal(y_a, y_b)


def test_per_bin_solve_recovers_lti_plant():
    specs = lti_chirp_spectra()
    problem = EstimationProblem(
        records=specs, n_harmonics=1, pump=2.0 * math.pi, alpha=0.0
    )
    spacing = specs[0].bin_spacing
    for q in (45, 100, 160):
        Phi, y = build_regressor(problem, q * spacing)
        g, *_ = np.linalg.lstsq(Phi, y, rcond=None)
        assert abs(g[1] - lti_frf(q * spacing)) / abs(g[1]) < 1e-12
        assert abs(g[0]) < 1e-12 * abs(g[1])
        assert abs(g[2]) < 1e-12 * abs(g[1])


def test_second_difference_stencil():
    d2 = second_difference(5)
    ramp = np.arange(5, dtype=float)
    assert np.array_equal(d2 @ ramp, np.zeros(3))
    assert np.array_equal(second_difference(3) @ np.array([1.0, 2.0, 4.0]), [1.0])
    g = np.array([0.3, -1.2, 0.7, 2.0, -0.4, 0.1])
    direct = sum(
        (g[i + 1] - 2.0 * g[i] + g[i - 1]) ** 2 for i in range(1, 5)
    )
    assert float(np.sum((second_difference(6) @ g) ** 2)) == pytest.approx(
        direct, rel=1e-14
    )
    with pytest.raises(InvalidInputError):
        second_difference(2)


# ------------------------------------------------------------- estimator


def test_uncoupled_estimate_is_per_bin_least_squares():
    specs = flat_spectrum_spectra()
    problem = EstimationProblem(
        records=specs,
        n_harmonics=1,
        pump=2.0 * math.pi,
        alpha=0.0,
        band_hz=(0.0, 10.0),
    )
    est = estimate_htf(problem)
    spacing = specs[0].bin_spacing
    for i, w in enumerate(est.omega_grid):
        Phi, y = build_regressor(problem, float(w))
        g, *_ = np.linalg.lstsq(Phi, y, rcond=None)
        for col, n in enumerate((-1, 0, 1)):
            assert est.harmonics[n][i] == g[col]
    # flat equal-magnitude spectra make the per-bin systems unitary
    assert est.diagnostics["cond_estimate"] == pytest.approx(1.0, abs=1e-9)
    assert np.max(relerr(est.harmonics[0], lti_frf(est.omega_grid))) < 1e-12
    for n in (-1, 1):
        assert np.max(np.abs(est.harmonics[n])) < 1e-12
        # bins whose shifted line leaves the band are exactly zero
        dead = ~est.excitation_mask[n]
        assert dead.any()
        assert not est.harmonics[n][dead].any()


def test_estimate_lti_chirp_with_tiny_alpha():
    specs = lti_chirp_spectra()
    problem = EstimationProblem(
        records=specs, n_harmonics=1, pump=2.0 * math.pi, alpha=1e-12
    )
    est = estimate_htf(problem)
    live = est.excitation_mask[0]
    err = relerr(est.harmonics[0][live], lti_frf(est.omega_grid[live]))
    assert np.max(err) < 1e-3
    for n in (-1, 1):
        assert np.max(np.abs(est.harmonics[n])) < 1e-10


def test_estimate_conjugate_pairing(lab_problem):
    # real signals force g(-w) = conj(g(+w)) with harmonic order reversed
    uncoupled = dataclasses.replace(lab_problem, alpha=0.0)
    spacing = lab_problem.records[0].bin_spacing
    for q in (40, 100, 177):
        gp, *_ = np.linalg.lstsq(
            *build_regressor(uncoupled, q * spacing), rcond=None
        )
        gm, *_ = np.linalg.lstsq(
            *build_regressor(uncoupled, -q * spacing), rcond=None
        )
        assert np.max(np.abs(gm - np.conj(gp[::-1]))) < 1e-10 * np.max(np.abs(gp))


def test_estimate_alpha_continuity(lab_problem, lab_estimate):
    halved = estimate_htf(dataclasses.replace(lab_problem, alpha=0.5e-8))
    num, den = 0.0, 0.0
    for n in lab_estimate.harmonics:
        num += float(np.sum(np.abs(halved.harmonics[n] - lab_estimate.harmonics[n]) ** 2))
        den += float(np.sum(np.abs(lab_estimate.harmonics[n]) ** 2))
    rel = math.sqrt(num / den)
    assert 0.0 < rel < 0.10


def test_estimate_beats_theory_on_its_own_cost(
    lab_problem, lab_estimate, lab_theory_on_estimate_grid
):
    # the estimator minimizes the data misfit, so no other candidate --
    # including the true linearization -- may score better
    assert cost(lab_problem, lab_estimate) <= cost(
        lab_problem, lab_theory_on_estimate_grid
    )


def test_excitation_mask_counts(lab_estimate):
    counts = {n: int(np.sum(m)) for n, m in lab_estimate.excitation_mask.items()}
    # 210 band bins; shifting by n*30 bins loses the tail (or just the
    # bin that lands on DC for upshifts)
    assert counts == {-3: 120, -2: 150, -1: 180, 0: 210, 1: 209, 2: 209, 3: 209}


def test_estimate_deterministic(lab_problem, lab_estimate):
    again = estimate_htf(lab_problem)
    for n in lab_estimate.harmonics:
        assert np.array_equal(again.harmonics[n], lab_estimate.harmonics[n])
    assert again.diagnostics == lab_estimate.diagnostics


def test_estimate_diagnostics_content(lab_estimate):
    d = lab_estimate.diagnostics
    assert d["n_records"] == 9 and d["n_bins"] == 210 and d["n_harmonics"] == 3
    assert d["cost"] == pytest.approx(d["data_residual"] + d["penalty"], rel=1e-12)
    assert np.isfinite(d["cond_estimate"])


def test_zero_amplitude_is_no_data(lab_model, lab_cycle):
    recs = run_experiments(
        lab_model,
        lab_cycle,
        ChirpPlan(amplitude=0.0, n_segments=3),
        warmup_periods=0,
    )
    problem = EstimationProblem(
        records=[spectra(r) for r in recs], n_harmonics=1, pump=2.0 * math.pi
    )
    with pytest.raises(NoDataError):
        estimate_htf(problem)


def test_starved_band_is_ill_conditioned(lab_spectra):
    # (0, 0.5] Hz leaves whole harmonic columns without excitation at
    # alpha values that cannot bridge the gap
    problem = EstimationProblem(
        records=lab_spectra,
        n_harmonics=3,
        pump=2.0 * math.pi,
        band_hz=(0.0, 0.5),
    )
    with pytest.raises(IllConditionedError):
        estimate_htf(problem)
