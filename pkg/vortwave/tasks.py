from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List
import logging
import math
import time

import numpy as np

from vortwave import __version__
from vortwave.config import get_settings
from vortwave.errors import ConfigError, InvariantFailure, VortwaveError
from vortwave.models import RunConfig, RunReport
from vortwave.services.dno_family import (
    FlatSeriesOperator,
    OperatorFamily,
    PhysicalParams,
    adjoint_defect,
    craig_sulem_terms,
    flat_multipliers,
    shape_derivative_beta,
    shape_derivative_eta,
    taylor_expand_g,
)
from vortwave.services.evolution import (
    RhsOptions,
    SurfaceState,
    cfl_limit,
    integrate,
    linear_dispersion,
    linear_mode_matrix,
    measure_mode_frequency,
    reverse,
    travelling_mode,
)
from vortwave.services.evolution import run as run_trajectory
from vortwave.services.grid_spectral import PeriodicGrid, SpectralField, random_band_limited
from vortwave.services.paradiff import (
    CutoffParams,
    adjoint_defect_symbol,
    compose_defect,
    default_delta,
    h_symbol,
    lambda_parts,
    lambda_symbol,
    symmetrizer_symbols,
)
from vortwave.services.paralinearization import amplitude_slopes, smoothing_ratios
from vortwave.services.straightening import BathymetryProfile
from vortwave.storage import RunStore

logger = logging.getLogger(__name__)
settings = get_settings()


def _pool() -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=max(1, settings.VORTWAVE_THREADS))


def _slope(xs, ys) -> float:
    ys = np.maximum(np.asarray(ys, dtype=float), 1e-300)
    return float(np.polyfit(np.log(np.asarray(xs, dtype=float)), np.log(ys), 1)[0])


def _rhs_options(config: RunConfig) -> RhsOptions:
    return RhsOptions(
        method=config.integrator.dno_method,
        series_order=config.integrator.series_order,
        m=config.grid.m,
        rule=config.integrator.dealias_rule,
    )


def _new_report(command: str, config: RunConfig) -> RunReport:
    return RunReport(command=command, version=__version__, config=config.model_dump(mode="json"))


def _finish(report: RunReport, store: RunStore, started: float) -> Dict:
    """Write the report and raise on the first failed invariant"""
    report.wall_time = time.perf_counter() - started
    failed = [inv for inv in report.invariants if not inv.passed]
    if failed:
        report.status = "failed"
        report.message = ", ".join(inv.name for inv in failed)
    rows = [
        [index, inv.measured, inv.threshold, 1.0 if inv.comparison == "<=" else -1.0, float(inv.passed)]
        for index, inv in enumerate(report.invariants)
    ]
    store.save_table("checks.csv", ["index", "measured", "threshold", "direction", "passed"], rows)
    store.save_report(report)

    for inv in report.invariants:
        marker = "✅" if inv.passed else "❌"
        logger.info(f"{marker} {inv.name}: {inv.measured:.3e} ({inv.comparison} {inv.threshold:.3e})")

    if failed:
        first = failed[0]
        logger.error(f"❌ {report.command} failed {len(failed)}/{len(report.invariants)} checks")
        raise InvariantFailure(first.name, first.measured, first.threshold)

    logger.info(f"✅ {report.command} completed in {report.wall_time:.1f}s")
    return {
        "status": "success",
        "command": report.command,
        "checks": len(report.invariants),
        "outputs": report.outputs,
        "wall_time": f"{report.wall_time:.1f}s",
    }


def _run_task(command: str, body: Callable[..., None], config: RunConfig, out_dir,
              binary: bool, base_dir=None) -> Dict:
    started = time.perf_counter()
    logger.info(f"🚀 Starting {command} (n={config.grid.n}, m={config.grid.m}, seed={config.seed})")
    store = RunStore(out_dir, binary=binary)
    report = _new_report(command, config)
    try:
        body(config, store, report, base_dir)
    except VortwaveError as e:
        logger.error(f"❌ Error in {command}: {e}")
        report.status = "error"
        report.message = str(e)
        report.wall_time = time.perf_counter() - started
        store.save_report(report)
        raise
    return _finish(report, store, started)


# ============================================================================
# simulate
# ============================================================================


def _simulate(config: RunConfig, store: RunStore, report: RunReport, base_dir=None):
    tol = config.tolerances
    trajectory = run_trajectory(config, base_dir=base_dir)
    logger.info(f"📊 {len(trajectory.t)} samples, dt={trajectory.dt:.3g}, CFL limit {trajectory.cfl_limit:.3g}")

    report.series = {
        "t": trajectory.t,
        "mass": trajectory.mass,
        "hamiltonian": trajectory.hamiltonian,
        "margin_min": trajectory.margin_min,
        "eta_l2": trajectory.eta_l2,
        "psi_l2": trajectory.psi_l2,
        "psi_mean": trajectory.psi_mean,
    }
    store.save_timeseries(trajectory)
    store.save_snapshots(trajectory)

    if trajectory.truncated:
        report.message = trajectory.diagnostic
    report.check("trajectory_completed", float(trajectory.truncated), 0.0)
    report.check("mass_drift", trajectory.drift("mass"), tol.mass_drift)
    report.check("mean_projection", trajectory.max_projection, 1e-12)
    if not math.isnan(trajectory.hamiltonian[0]):
        report.check("hamiltonian_drift", trajectory.drift("hamiltonian"), tol.hamiltonian_drift)


def cmd_simulate(config: RunConfig, out_dir, binary: bool = False, base_dir=None) -> Dict:
    """Integrate the configured initial data and export the time series"""
    if not config.params.kappa > 0:
        raise ConfigError("simulate needs surface tension kappa > 0")
    return _run_task("simulate", _simulate, config, out_dir, binary, base_dir)


# ============================================================================
# dno-check
# ============================================================================


def _random_draw(config: RunConfig, grid: PeriodicGrid, rng: np.random.Generator):
    checks = config.checks
    eta = random_band_limited(grid, rng, checks.random_kmax, checks.random_amplitude)
    beta = random_band_limited(grid, rng, checks.random_kmax, checks.random_amplitude)
    data = [random_band_limited(grid, rng, checks.random_kmax, 1.0) for _ in range(4)]
    return eta, BathymetryProfile(beta, config.params.h, config.params.h0), data


def _flat_multiplier_error(config: RunConfig, grid: PeriodicGrid) -> float:
    params = config.params
    flat = SpectralField.zeros(grid)
    family = OperatorFamily(flat, BathymetryProfile.flat(grid, params.h, params.h0), m=config.grid.m)
    symbols = flat_multipliers(params.h)
    modes = list(range(0, grid.n // 3 + 1))
    probes = [SpectralField(grid, np.cos(k * grid.x)) for k in modes]
    dirichlet = family.traces([(probe, flat) for probe in probes])
    neumann = family.traces([(flat, probe) for probe in probes])
    worst = 0.0
    for k, probe, (dn, dd), (nn, nd) in zip(modes, probes, dirichlet, neumann):
        for out, symbol in ((dn, symbols.dn), (dd, symbols.dd), (nn, symbols.nn), (nd, symbols.nd)):
            value = float(symbol(np.array([k]))[0])
            worst = max(worst, (out - value * probe).max_abs() / max(1.0, abs(value)))
    return worst


def _adjoint_scaled(config: RunConfig, draw) -> float:
    eta, bath, (psi1, psi2, theta1, theta2) = draw
    defects = adjoint_defect(eta, bath, psi1, psi2, theta1, theta2, m=config.grid.m)
    scale = max(field.l2() for field in (psi1, psi2, theta1, theta2)) ** 2
    return max(defects.values()) / scale


def _shape_fd(config: RunConfig, draw, which: str):
    """Central-difference mismatch of the shape derivative for each fd_eps."""
    params = config.params
    m = config.grid.m
    eta, bath, (psi, direction, _, _) = draw
    direction = direction / direction.max_abs()
    family = OperatorFamily(eta, bath, m=m)
    if which == "eta":
        exact = shape_derivative_eta(eta, bath, params, psi, direction, family)
        moved = lambda s: OperatorFamily(eta + s * direction, bath, m=m).full(psi, params.gamma)
    else:
        exact = shape_derivative_beta(eta, bath, params, psi, direction, family)
        moved = lambda s: OperatorFamily(
            eta, BathymetryProfile(bath.beta + s * direction, bath.h, bath.h0), m=m
        ).full(psi, params.gamma)
    mismatch = []
    for eps in config.checks.fd_eps:
        fd = (moved(eps) - moved(-eps)) / (2.0 * eps)
        mismatch.append((fd - exact).max_abs())
    return mismatch


def _taylor_ratios(config: RunConfig, draw):
    params = config.params
    order = config.checks.taylor_order
    eta, bath, (psi, _, _, _) = draw
    residuals = []
    for a in config.checks.amplitudes:
        scaled = a / config.checks.random_amplitude * eta
        G = OperatorFamily(scaled, bath, m=config.grid.m).full(psi, params.gamma)
        terms = taylor_expand_g(scaled, bath, params, psi, order, m=config.grid.m)
        total = terms[0]
        for term in terms[1:]:
            total = total + term
        residuals.append((G - total).max_abs())
    ratios = [residuals[i] / residuals[i + 1] for i in range(len(residuals) - 1)]
    return residuals, ratios


def _classical_match(config: RunConfig, draw) -> float:
    eta, _, (psi, _, _, _) = draw
    ours = FlatSeriesOperator(eta, config.params.h, order=2).terms(psi)
    classical = craig_sulem_terms(eta, config.params.h, psi)
    return max((a - b).max_abs() for a, b in zip(ours, classical)) / max(1.0, psi.max_abs())


def _dno_check(config: RunConfig, store: RunStore, report: RunReport, base_dir=None):
    tol = config.tolerances
    grid = config.periodic_grid()
    rng = config.rng()
    draws = [_random_draw(config, grid, rng) for _ in range(config.checks.random_draws)]

    with _pool() as pool:
        flat_error = pool.submit(_flat_multiplier_error, config, grid)
        adjoint = list(pool.map(lambda draw: _adjoint_scaled(config, draw), draws))
        fd_eta = pool.submit(_shape_fd, config, draws[0], "eta")
        fd_beta = pool.submit(_shape_fd, config, draws[0], "beta")
        taylor = pool.submit(_taylor_ratios, config, draws[0])
        flat_error, fd_eta, fd_beta = flat_error.result(), fd_eta.result(), fd_beta.result()
        residuals, ratios = taylor.result()

    report.check("flat_multipliers", flat_error, tol.flat_multiplier)
    report.check("adjoint_identities", max(adjoint), tol.adjoint)
    report.check("shape_derivative_eta_slope", _slope(config.checks.fd_eps, fd_eta), tol.fd_slope, ">=")
    report.check("shape_derivative_beta_slope", _slope(config.checks.fd_eps, fd_beta), tol.fd_slope, ">=")
    target = 2.0 ** (config.checks.taylor_order + 1)
    if ratios:
        spread = max(abs(r / target - 1.0) for r in ratios)
        report.check("taylor_halving_ratio", spread, tol.taylor_band)
    report.check("classical_expansion_match", _classical_match(config, draws[0]), tol.classical_match)

    report.series = {
        "adjoint_scaled": adjoint,
        "fd_eps": list(config.checks.fd_eps),
        "fd_mismatch_eta": fd_eta,
        "fd_mismatch_beta": fd_beta,
        "taylor_amplitudes": list(config.checks.amplitudes),
        "taylor_residual": residuals,
    }
    store.save_table(
        "shape_derivatives.csv",
        ["eps", "mismatch_eta", "mismatch_beta"],
        np.column_stack([config.checks.fd_eps, fd_eta, fd_beta]),
    )
    store.save_table(
        "taylor.csv", ["amplitude", "residual"], np.column_stack([config.checks.amplitudes, residuals])
    )


def cmd_dno_check(config: RunConfig, out_dir, binary: bool = False, base_dir=None) -> Dict:
    """Flat multipliers, adjoint identities, shape derivatives and the homogeneous expansion"""
    return _run_task("dno-check", _dno_check, config, out_dir, binary, base_dir)


# ============================================================================
# paralin-check
# ============================================================================


def _symmetrizer_defects(config: RunConfig, eta: SpectralField, bath: BathymetryProfile):
    checks = config.checks
    kappa = config.params.kappa
    cutoff = CutoffParams(eps1=checks.symmetrizer_eps[0], eps2=checks.symmetrizer_eps[1])
    delta = default_delta(bath.h, bath.h0)
    _, lam0 = lambda_parts(eta, delta, bath.h, bath.h0)
    sym = symmetrizer_symbols(eta, kappa, lam0)
    p, q, theta = sym.p.evaluate(), sym.q.evaluate(), sym.theta.evaluate()
    lam = lambda_symbol(eta, delta, bath.h, bath.h0)
    h = h_symbol(eta)
    modes = [N for N in checks.symmetrizer_modes if N < eta.grid.n // 3]
    first = compose_defect(p, lam, theta, q, modes, cutoff)
    second = compose_defect(q, h, theta, p, modes, cutoff, scale=1.0 / kappa)
    skew = adjoint_defect_symbol(theta, modes, cutoff)
    return modes, first, second, skew


def _paralin_check(config: RunConfig, store: RunStore, report: RunReport, base_dir=None):
    tol = config.tolerances
    checks = config.checks
    params = config.params
    eta, psi, bath = config.initial_fields(base_dir=base_dir)
    if eta.is_zero() or psi.is_zero():
        raise ConfigError("paralin-check needs non-zero initial eta and psi")
    opts = _rhs_options(config)

    modes = [N for N in checks.probe_modes if N <= config.grid.n // 3]
    rows = smoothing_ratios(eta, bath, params, modes, checks.sobolev_s, opts)
    if len(rows) >= 2:
        ratio_r = [r for _, r, _ in rows]
        ratio_g = [g for _, _, g in rows]
        report.check("remainder_ratio_band", max(ratio_r) / ratio_r[0], tol.smoothing_band)
        report.check("operator_ratio_growth", ratio_g[-1] / ratio_g[0], tol.smoothing_growth, ">=")
    store.save_table("smoothing.csv", ["N", "ratio_remainder", "ratio_operator"], rows)

    slopes = amplitude_slopes(eta, psi, bath, params, checks.amplitudes, opts)
    for name, slope in slopes.items():
        report.check(f"residual_{name}_slope", slope, tol.paralin_slope, ">=")

    if params.kappa > 0:
        sym_modes, first, second, skew = _symmetrizer_defects(config, eta, bath)
        if len(sym_modes) >= 2:
            report.check("symmetrizer_lambda_slope", _slope(sym_modes, first), checks.symmetrizer_slope)
            report.check("symmetrizer_h_slope", _slope(sym_modes, second), checks.symmetrizer_slope)
            report.check("symmetrizer_adjoint_slope", _slope(sym_modes, skew), checks.symmetrizer_slope)
            store.save_table(
                "symmetrizer.csv",
                ["N", "defect_lambda", "defect_h", "defect_adjoint"],
                np.column_stack([sym_modes, first, second, skew]),
            )
        else:
            logger.warning("⚠️ Grid too coarse for the symmetrizer mode sweep; skipped")
    report.series = {"amplitudes": list(checks.amplitudes), **{f"slope_{k}": [v] for k, v in slopes.items()}}


def cmd_paralin_check(config: RunConfig, out_dir, binary: bool = False, base_dir=None) -> Dict:
    """Smoothing of the paralinearization remainder, residual scaling and symmetrizer defects"""
    return _run_task("paralin-check", _paralin_check, config, out_dir, binary, base_dir)


# ============================================================================
# dispersion
# ============================================================================


def _eigen_frequencies(k: int, params: PhysicalParams):
    # modes evolve as e^{λt} = e^{-iωt}
    omegas = np.sort((1j * np.linalg.eigvals(linear_mode_matrix(k, params))).real)[::-1]
    return float(omegas[0]), float(omegas[1])


def _measured_frequency(config: RunConfig, grid: PeriodicGrid, k: int, params: PhysicalParams) -> float:
    omega = linear_dispersion(k, params)[0]
    state = travelling_mode(grid, k, config.checks.dispersion_amplitude, params)
    bath = BathymetryProfile.flat(grid, params.h, params.h0)
    dt = min(config.integrator.dt, 0.5 * cfl_limit(grid, params, config.integrator.cfl_safety))
    period = 2.0 * math.pi / abs(omega)
    steps = max(10, int(math.ceil(period / dt)))
    trajectory = integrate(state, bath, params, period / steps, period, 1, _rhs_options(config),
                           config.integrator.cfl_safety)
    return measure_mode_frequency(trajectory, k)


def _dispersion(config: RunConfig, store: RunStore, report: RunReport, base_dir=None):
    tol = config.tolerances
    grid = config.periodic_grid()
    measure = config.params.kappa > 0
    cases = [(k, gamma) for gamma in config.checks.gammas for k in config.checks.k_values]

    def row(case):
        k, gamma = case
        params = config.params.model_copy(update={"gamma": gamma})
        plus, minus = linear_dispersion(k, params)
        eig_plus, eig_minus = _eigen_frequencies(k, params)
        measured = _measured_frequency(config, grid, k, params) if measure and k < grid.n // 3 else float("nan")
        return [k, gamma, plus, minus, eig_plus, eig_minus, measured]

    with _pool() as pool:
        rows = list(pool.map(row, cases))

    eigen_error = max(
        max(abs(r[2] - r[4]), abs(r[3] - r[5])) / max(abs(r[2]), abs(r[3])) for r in rows
    )
    report.check("dispersion_eigen_match", eigen_error, tol.dispersion)
    measured = [abs(r[6] - r[2]) / abs(r[2]) for r in rows if not math.isnan(r[6])]
    if measured:
        report.check("dispersion_measured_match", max(measured), tol.dispersion)
    store.save_table(
        "dispersion.csv",
        ["k", "gamma", "omega_plus", "omega_minus", "eig_plus", "eig_minus", "measured"],
        rows,
    )
    report.series = {name: [r[i] for r in rows] for i, name in enumerate(["k", "gamma", "omega_plus", "omega_minus"])}


def cmd_dispersion(config: RunConfig, out_dir, binary: bool = False, base_dir=None) -> Dict:
    """Linear dispersion table, eigen oracle and measured mode frequencies"""
    return _run_task("dispersion", _dispersion, config, out_dir, binary, base_dir)


def dispersion_table(config: RunConfig) -> List[Dict[str, float]]:
    """Closed-form and eigen-oracle frequencies, no time integration"""
    out = []
    for gamma in config.checks.gammas:
        params = config.params.model_copy(update={"gamma": gamma})
        for k in config.checks.k_values:
            plus, minus = linear_dispersion(k, params)
            eig_plus, eig_minus = _eigen_frequencies(k, params)
            out.append({"k": k, "gamma": gamma, "omega_plus": plus, "omega_minus": minus,
                        "eig_plus": eig_plus, "eig_minus": eig_minus})
    return out


# ============================================================================
# convergence
# ============================================================================


def _poisson_probe(grid: PeriodicGrid, r: float = 0.5) -> SpectralField:
    values = (1.0 - r**2) / (1.0 - 2.0 * r * np.cos(grid.x) + r**2)
    field = SpectralField(grid, values)
    return field - field.mean()


def _elliptic_level(config: RunConfig, n: int, m: int, base_dir=None) -> SpectralField:
    grid = PeriodicGrid(n)
    eta, _, bath = config.initial_fields(grid, base_dir)
    family = OperatorFamily(eta, bath, m=m)
    return family.full(_poisson_probe(grid), config.params.gamma)


def _time_defects(config: RunConfig, dt: float, base_dir=None):
    """(Hamiltonian drift or nan, reversibility defect or nan) at step dt."""
    eta, psi, bath = config.initial_fields(base_dir=base_dir)
    opts = _rhs_options(config)
    t_end = config.integrator.t_end
    safety = config.integrator.cfl_safety
    start = SurfaceState(0.0, eta, psi)
    forward = integrate(start, bath, config.params, dt, t_end, 1, opts, safety)
    drift = forward.drift("hamiltonian") if bath.is_flat else float("nan")
    defect = float("nan")
    if config.reversibility and not forward.truncated:
        back = integrate(reverse(forward.final), bath, config.params, dt, t_end, 1, opts, safety)
        target = reverse(start)
        defect = max((back.final.eta - target.eta).max_abs(), (back.final.psi - target.psi).max_abs())
    return drift, defect


def _convergence(config: RunConfig, store: RunStore, report: RunReport, base_dir=None):
    tol = config.tolerances
    levels = [(n, max(3, (3 * n) // 4)) for n in config.checks.n_values]
    n_ref = 2 * max(n for n, _ in levels)
    reference_level = (n_ref, (3 * n_ref) // 4)

    with _pool() as pool:
        solutions = list(pool.map(
            lambda level: _elliptic_level(config, *level, base_dir=base_dir),
            levels + [reference_level],
        ))
    reference = solutions[-1]
    errors = []
    for (n, _), solution in zip(levels, solutions[:-1]):
        stride = n_ref // n
        errors.append(float(np.max(np.abs(solution.values - reference.values[::stride]))))
    factors = [errors[i] / errors[i + 1] for i in range(len(errors) - 1)]
    if factors:
        report.check("elliptic_convergence_factor", min(factors), tol.convergence_factor, ">=")
    store.save_table(
        "convergence.csv",
        ["n", "m", "error"],
        [[n, m, e] for (n, m), e in zip(levels, errors)],
    )

    time_rows = []
    if config.params.kappa > 0:
        for dt in config.checks.dt_values:
            drift, defect = _time_defects(config, dt, base_dir)
            logger.info(f"📊 dt={dt:.3g}: Hamiltonian drift {drift:.3e}, reversibility defect {defect:.3e}")
            time_rows.append([dt, drift, defect])
        if len(time_rows) >= 2:
            first, second = time_rows[0], time_rows[1]
            if not math.isnan(first[1]):
                report.check("hamiltonian_drift_ratio", first[1] / second[1], 12.0, ">=")
            if not math.isnan(first[2]):
                report.check("reversibility_ratio", first[2] / second[2], 12.0, ">=")
        store.save_table("time_convergence.csv", ["dt", "hamiltonian_drift", "reversibility_defect"], time_rows)
    else:
        logger.warning("⚠️ kappa = 0: time-step convergence skipped")

    report.series = {"elliptic_error": errors, "elliptic_factor": factors}


def cmd_convergence(config: RunConfig, out_dir, binary: bool = False, base_dir=None) -> Dict:
    """Elliptic self-convergence and time-step halving ratios"""
    return _run_task("convergence", _convergence, config, out_dir, binary, base_dir)


COMMANDS = {
    "simulate": cmd_simulate,
    "dno-check": cmd_dno_check,
    "paralin-check": cmd_paralin_check,
    "dispersion": cmd_dispersion,
    "convergence": cmd_convergence,
}
