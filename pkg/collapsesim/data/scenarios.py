import cmath
import logging
import math
import os
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import orjson
import yaml

from collapsesim.chains import detector
from collapsesim.core.errors import (
    CollapseSimError,
    ScenarioError,
    UnknownParameter,
    UnknownScenario,
)
from collapsesim.core.frames import (
    FRAME_MINUS,
    FRAME_PLUS,
    LAB,
    conditioning_probability,
    hardy_orderings,
    hardy_partition,
    marginal_probability,
    retrodiction_report,
)
from collapsesim.core.measurement import (
    CollapsePolicy,
    ObservablePartition,
    born_probabilities,
    collapse,
    joint_born_probabilities,
    sample,
)
from collapsesim.core.optics import (
    MINUS,
    PHOTON,
    PLUS,
    evolve,
    hardy_circuit,
    hardy_source,
    mach_zehnder_circuit,
    photon_ket,
    source_ket,
    triple_circuit,
    which_way_circuit,
)
from collapsesim.core.rng import RngStream
from collapsesim.core.screen import (
    IntensityMap,
    PlaneWaveComponent,
    hit_histogram,
    intensity_pattern,
    mixture_intensity,
    sample_hits,
    screen_grid,
    visibility,
)
from collapsesim.core.statevec import BasisLabel, Ket, inner
from collapsesim.data.models import (
    Expectation,
    PolicyResult,
    RunReport,
    ScenarioSpec,
    Table,
)
from collapsesim.dynamics import csl, rdm

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240601
ALL_POLICIES = (CollapsePolicy.COLLAPSE, CollapsePolicy.UNITARY_ONLY)
POLICY_INDEPENDENT = "independent"

MONTE_CARLO = "monte carlo, 4 sigma"
CLOSED_FORM = "closed form"
EXACT = "exact"


class _Run:
    """Accumulates one scenario run; runners only append to it."""

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.params = dict(spec.parameters)
        self.rng = RngStream(spec.seed, spec.name)
        self.policy = "setup"
        self.results: Dict[str, PolicyResult] = {}
        self.tables: List[Table] = []
        self.expectations: List[Expectation] = []

    def integer(self, name: str) -> int:
        value = self.params[name]
        if value < 0 or value != math.floor(value):
            raise ValueError(f"parameter {name} must be a non-negative integer, got {value}")
        return int(value)

    def values(self, policy: str) -> Dict:
        self.policy = policy
        if policy not in self.results:
            self.results[policy] = PolicyResult(policy=policy)
        return self.results[policy].values

    def expect(
        self, name: str, observed: float, expected: float, tolerance: float, basis: str
    ):
        self.expectations.append(
            Expectation(
                name=name,
                observed=float(observed),
                expected=float(expected),
                tolerance=float(tolerance),
                basis=basis,
            )
        )

    def table(self, name: str, columns: Sequence[str], rows: Iterable[Sequence]):
        self.tables.append(
            Table(name=name, columns=list(columns), rows=[list(_plain(r)) for r in rows])
        )

    def report(self) -> RunReport:
        results = [
            PolicyResult(
                policy=k,
                values={name: next(_plain([v])) for name, v in self.results[k].values.items()},
            )
            for k in sorted(self.results)
        ]
        return RunReport(
            scenario=self.spec,
            results=results,
            tables=self.tables,
            expectations=self.expectations,
        )


def _plain(row: Sequence):
    for value in row:
        if isinstance(value, np.bool_):
            yield bool(value)
        elif isinstance(value, np.integer):
            yield int(value)
        elif isinstance(value, (np.floating, float)):
            yield float(value)
        else:
            yield value


def _binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / max(n, 1))


def _photon_amplitude(k: Ket, mode: str) -> complex:
    return k.amplitude(BasisLabel(((PHOTON, mode),)))


def _overlap(expected: Ket, actual: Ket) -> float:
    return abs(inner(expected, actual)) / (expected.norm() * actual.norm())


def _hit_rows(m, n: int, rng: RngStream):
    if n == 0:
        return []
    counts, edges = hit_histogram(sample_hits(m, n, rng), m.grid)
    return [(float(left), int(c)) for left, c in zip(edges[:-1], counts)]


# hardy


def _hardy_closed_form(reflectivity_plus: float, reflectivity_minus: float) -> np.ndarray:
    """Joint probabilities indexed [p+ in (c, d), p- in (c, d)] by 2x2 matrices."""

    def splitter(r):
        t, s = math.sqrt(1.0 - r), 1j * math.sqrt(r)
        return np.array([[t, s], [s, t]])

    source = np.array([[0.0, 1j], [1j, 1.0]]) / math.sqrt(3.0)
    out = splitter(reflectivity_plus) @ source @ splitter(reflectivity_minus).T
    return np.abs(out) ** 2


def _run_hardy(ctx: _Run, policies: Sequence[CollapsePolicy]):
    rp, rm = ctx.params["reflectivity_plus"], ctx.params["reflectivity_minus"]
    trials = ctx.integer("trials")
    source = hardy_source()
    final = evolve(source, hardy_circuit(rp, rm))[-1]
    partitions = [hardy_partition(PLUS), hardy_partition(MINUS)]
    table = joint_born_probabilities(final, partitions)
    closed = _hardy_closed_form(rp, rm)
    index = {"C": 0, "D": 1}

    rows = []
    for key, probability in table.items():
        plus, minus = key.split(",")
        rows.append((plus, minus, probability))
        ctx.expect(
            f"P({plus},{minus})",
            probability,
            closed[index[plus[0]], index[minus[0]]],
            1e-12,
            CLOSED_FORM,
        )
    ctx.table("probabilities", ["outcome_plus", "outcome_minus", "probability"], rows)

    orderings = hardy_orderings(rp, rm)
    conditioned = {PLUS: "D+", MINUS: "D-"}
    report = retrodiction_report(source, list(orderings.values()), conditioned)
    p_dd = conditioning_probability(source, orderings[LAB], conditioned)
    ctx.expect("P(D+,D-) along the lab ordering", p_dd, closed[1, 1], 1e-12, CLOSED_FORM)
    balanced = abs(rp - 0.5) < 1e-12 and abs(rm - 0.5) < 1e-12
    ctx.expect(
        "contradiction flag for (D+,D-)",
        float(report.contradiction),
        1.0 if balanced else 0.0,
        0.0,
        EXACT,
    )
    ctx.table(
        "retrodiction",
        ["ordering", "forced_subsystem", "forced_mode"],
        [
            (name, subsystem, mode)
            for name in sorted(report.forced)
            for subsystem, mode in sorted(report.forced[name])
        ],
    )

    p_lab = marginal_probability(source, orderings[LAB], PLUS, "D+")
    ctx.expect("P(D+) lab", p_lab, closed[1].sum(), 1e-12, CLOSED_FORM)
    marginals = {LAB: p_lab}
    for name in (FRAME_PLUS, FRAME_MINUS):
        marginals[name] = marginal_probability(source, orderings[name], PLUS, "D+")
        ctx.expect(f"P(D+) {name} matches lab", marginals[name], p_lab, 1e-12, EXACT)

    shared = {
        "contradiction": report.contradiction,
        "missing_from_initial": " ".join(sorted(str(l) for l in report.missing_from_initial)),
        "p_dd_lab_path": p_dd,
    }
    shared.update({f"p_d_plus_{name}": value for name, value in marginals.items()})

    outcomes = list(table)
    for policy in policies:
        values = ctx.values(policy.value)
        values.update(shared)
        stream = ctx.rng.split(policy.value)
        counts = {key: 0 for key in outcomes}
        for _ in range(trials):
            first = sample(final, partitions[0], policy, stream)
            second = sample(first.post_state, partitions[1], policy, stream)
            counts[f"{first.outcome},{second.outcome}"] += 1
        rows = []
        for key in outcomes:
            frequency = counts[key] / max(trials, 1)
            values[f"freq[{key}]"] = frequency
            plus, minus = key.split(",")
            rows.append((plus, minus, frequency))
        ctx.table(
            f"frequencies_{policy.value}", ["outcome_plus", "outcome_minus", "frequency"], rows
        )
        if policy is CollapsePolicy.COLLAPSE:
            expected = closed[1, 1]
        else:
            # the second readout sees the unreduced state, so outcomes decorrelate
            expected = closed[1].sum() * closed[:, 1].sum()
        if trials:
            ctx.expect(
                f"freq(D+,D-) under {policy.value}",
                counts["D+,D-"] / trials,
                expected,
                4.0 * _binomial_sigma(expected, trials),
                MONTE_CARLO,
            )


# mz-histories


def _run_mz(ctx: _Run, policies: Sequence[CollapsePolicy]):
    phi_c, phi_d = ctx.params["phi_c"], ctx.params["phi_d"]
    kappa0 = ctx.params["kappa0"]
    trials = ctx.integer("trials")
    stages = evolve(photon_ket({"a": 1.0}), mach_zehnder_circuit(phi_c, phi_d))
    final = stages[-1]
    beta, alpha = (phi_d - phi_c) / 2.0, (phi_c + phi_d) / 2.0
    lead = 1j * cmath.exp(1j * alpha)
    closed = photon_ket({"e": lead * math.sin(beta), "f": lead * math.cos(beta)})
    ctx.expect("final state overlap", _overlap(closed, final), 1.0, 1e-12, CLOSED_FORM)
    ctx.table(
        "stage_amplitudes",
        ["stage", "mode", "re", "im"],
        [
            (index, label.mode(PHOTON), amp.real, amp.imag)
            for index, k in enumerate(stages)
            for label, amp in k.terms.items()
        ],
    )

    amp_e, amp_f = _photon_amplitude(final, "e"), _photon_amplitude(final, "f")
    grid = screen_grid(ctx.integer("grid_points"), kappa0)
    for policy in policies:
        values = ctx.values(policy.value)
        values["weight_e"] = abs(amp_e) ** 2
        values["weight_f"] = abs(amp_f) ** 2
        if policy is CollapsePolicy.UNITARY_ONLY:
            m = intensity_pattern(
                [PlaneWaveComponent(amp_e, -kappa0), PlaneWaveComponent(amp_f, kappa0)], grid
            )
            v = visibility(m)
            ctx.expect(
                "coherent fringe visibility",
                v,
                abs(math.sin(phi_d - phi_c)),
                1e-10,
                CLOSED_FORM,
            )
        else:
            # each trial realizes one history: the photon leaves through e or f alone
            m = mixture_intensity(
                [
                    (abs(amp_e) ** 2, [PlaneWaveComponent(1.0, -kappa0)]),
                    (abs(amp_f) ** 2, [PlaneWaveComponent(1.0, kappa0)]),
                ],
                grid,
            )
            v = visibility(m)
            ctx.expect("history mixture visibility", v, 0.0, 1e-10, EXACT)
        values["visibility"] = v
        values["mean_intensity"] = m.mean
        ctx.table(f"intensity_{policy.value}", ["x", "intensity"], m.rows())
        ctx.table(
            f"hits_{policy.value}",
            ["bin_left", "count"],
            _hit_rows(m, trials, ctx.rng.split(f"hits-{policy.value}")),
        )


# which-way


def _run_which_way(ctx: _Run, policies: Sequence[CollapsePolicy]):
    phi = ctx.params["phi"]
    n_macro = ctx.integer("n_macro")
    growth = ctx.params["growth"]
    arrival = ctx.integer("arrival_step")
    k_initial = ctx.integer("k_initial")
    trials = ctx.integer("trials")

    photon = evolve(source_ket("s"), which_way_circuit(phi))[-1]
    closed = photon_ket(
        {"a": -cmath.exp(1j * phi) / math.sqrt(2.0), "b": -1j / math.sqrt(2.0)}
    )
    ctx.expect("photon state overlap", _overlap(closed, photon), 1.0, 1e-12, CLOSED_FORM)

    seeded = detector.seed(photon, ctx.integer("n_initial"))
    grown = detector.amplify_until(seeded, n_macro, growth, arrival, k_initial)
    growth_rows = []
    for step in range(grown.step + 1):
        cs = detector.amplify(seeded, step, growth, arrival, k_initial)
        growth_rows.append(
            (
                step,
                cs.branch("a").perturbed_a if cs.branch("a") else 0,
                cs.branch("b").perturbed_b if cs.branch("b") else 0,
            )
        )
    ctx.table("chain_growth", ["step", "perturbed_a", "perturbed_b"], growth_rows)
    ctx.table(
        "chain_branches",
        ["branch", "amplitude_re", "amplitude_im", "perturbed_a", "perturbed_b"],
        [
            (b.label, b.amplitude.real, b.amplitude.imag, b.perturbed_a, b.perturbed_b)
            for b in grown.branches
        ],
    )
    cross = abs(detector.cross_branch_amplitude(grown))
    overlap_count = max(b.perturbed_a * b.perturbed_b for b in grown.branches)
    ctx.expect("cross-branch amplitude", cross, 0.0, 0.0, EXACT)
    ctx.expect("max N*K over branches", overlap_count, 0.0, 0.0, EXACT)
    ctx.expect("branch weight after amplification", grown.weight, seeded.weight, 0.0, EXACT)

    weight_a = abs(closed.amplitude(BasisLabel(((PHOTON, "a"),)))) ** 2
    for policy in policies:
        values = ctx.values(policy.value)
        values["steps_to_macroscopic"] = grown.step
        values["cross_branch_amplitude"] = cross
        if policy is CollapsePolicy.COLLAPSE:
            stream = ctx.rng.split("threshold")
            selected_a = 0
            leftovers = 0
            for _ in range(trials):
                outcome = detector.threshold_collapse(grown, n_macro, stream)
                selected_a += outcome.selected_branch == "a"
                leftovers += outcome.losing_perturbed != 0
            frequency = selected_a / max(trials, 1)
            values["freq_a"] = frequency
            values["runs_with_losing_perturbation"] = leftovers
            if trials:
                ctx.expect(
                    "branch a selection frequency",
                    frequency,
                    weight_a,
                    4.0 * _binomial_sigma(weight_a, trials),
                    MONTE_CARLO,
                )
            ctx.expect("runs with losing perturbation", leftovers, 0.0, 0.0, EXACT)
        else:
            macroscopic = sum(1 for b in grown.branches if b.perturbed >= n_macro)
            values["macroscopic_branches"] = macroscopic
            ctx.expect(
                "macroscopic branches without reduction", macroscopic, len(grown.branches), 0.0, EXACT
            )


# triple-interference


CLICK = "click"
NO_CLICK = "no-click"
PLATE_MODES = ("a", "c")


def _plate_map(state: Ket, weight: float, wavenumbers: Mapping[str, float], grid: np.ndarray):
    """Plate density of one branch scaled by its probability; b ends in the detector."""
    components = [
        PlaneWaveComponent(math.sqrt(weight) * _photon_amplitude(state, m), wavenumbers[m])
        for m in PLATE_MODES
        if m in state.modes(PHOTON)
    ]
    if not components:
        return IntensityMap(grid, np.zeros_like(grid))
    return intensity_pattern(components, grid)


def _run_triple(ctx: _Run, policies: Sequence[CollapsePolicy]):
    theta1, theta3 = ctx.params["theta1"], ctx.params["theta3"]
    kappa0 = ctx.params["kappa0"]
    trials = ctx.integer("trials")

    final = evolve(source_ket("s"), triple_circuit(theta1, theta3))[-1]
    s = 1.0 / math.sqrt(3.0)
    closed = photon_ket(
        {"a": -cmath.exp(1j * theta1) * s, "b": -s, "c": -cmath.exp(1j * theta3) * s}
    )
    ctx.expect("final state overlap", _overlap(closed, final), 1.0, 1e-12, CLOSED_FORM)

    amps = {mode: _photon_amplitude(final, mode) for mode in ("a", "b", "c")}
    wavenumbers = {"a": -kappa0, "b": 0.0, "c": kappa0}
    grid = screen_grid(ctx.integer("grid_points"), kappa0)
    trio = intensity_pattern(
        [PlaneWaveComponent(amps[m], wavenumbers[m]) for m in ("a", "b", "c")], grid
    )
    detector_b = ObservablePartition(PHOTON, {CLICK: {"b"}, NO_CLICK: {"a", "c"}})
    born = born_probabilities(final, detector_b)
    background = abs(closed.amplitude(BasisLabel(((PHOTON, "b"),)))) ** 2

    for policy in policies:
        values = ctx.values(policy.value)
        stream = ctx.rng.split(policy.value)
        draws = [sample(final, detector_b, policy, stream) for _ in range(trials)]
        clicks = sum(d.outcome == CLICK for d in draws)
        frequency = clicks / max(trials, 1)
        values["click_frequency"] = frequency
        if trials:
            ctx.expect(
                f"click frequency under {policy.value}",
                frequency,
                background,
                4.0 * _binomial_sigma(background, trials),
                MONTE_CARLO,
            )
        if policy is CollapsePolicy.UNITARY_ONLY:
            values["plate_mean"] = trio.mean
            values["visibility"] = visibility(trio)
            ctx.table("intensity_unitary", ["x", "intensity"], trio.rows())
            ctx.table(
                "hits_unitary",
                ["bin_left", "count"],
                _hit_rows(trio, trials, ctx.rng.split("hits-unitary")),
            )
            continue

        # each Lüders branch lights the plate with whatever a and c it keeps
        post = {outcome: collapse(final, detector_b, outcome) for outcome in (CLICK, NO_CLICK)}
        click = _plate_map(post[CLICK], born[CLICK], wavenumbers, grid)
        noclick = _plate_map(post[NO_CLICK], born[NO_CLICK], wavenumbers, grid)
        values["plate_mean_noclick"] = noclick.mean
        values["plate_mean_click"] = click.mean
        values["noclick_state"] = str(post[NO_CLICK])
        values["background_discrepancy"] = trio.mean - (click.mean + noclick.mean)
        ctx.expect(
            "background removed by a no-click",
            trio.mean - (click.mean + noclick.mean),
            background,
            1e-10,
            CLOSED_FORM,
        )
        ctx.expect("plate intensity after a click", click.maximum, 0.0, 0.0, EXACT)

        sampled = next((d.post_state for d in draws if d.outcome == NO_CLICK), None)
        if sampled is not None:
            ctx.expect(
                "sampled no-click state matches the Lüders state",
                abs(inner(post[NO_CLICK], sampled)),
                1.0,
                1e-12,
                EXACT,
            )
        ctx.table("intensity_collapse_noclick", ["x", "intensity"], noclick.rows())
        ctx.table("intensity_collapse_click", ["x", "intensity"], click.rows())
        hits = []
        if sampled is not None:
            hits = _hit_rows(
                _plate_map(sampled, 1.0, wavenumbers, grid),
                trials - clicks,
                ctx.rng.split("hits-collapse"),
            )
        ctx.table("hits_collapse", ["bin_left", "count"], hits)


# rdm-delay


def _run_rdm(ctx: _Run, policies: Sequence[CollapsePolicy]):
    rate = ctx.params["jump_rate"]
    if rate <= 0.0:
        raise ValueError("jump_rate must be positive to express delays as r*delta")
    w0 = ctx.params["weight_0"]
    trials = ctx.integer("trials")
    cfg = rdm.RdmConfig(
        jump_rate=rate,
        duration=ctx.params["duration"],
        tick=ctx.params["tick"],
        weights=(w0, 1.0 - w0),
    )
    values = ctx.values(POLICY_INDEPENDENT)

    zero = rdm.mismatch_fraction(cfg, 0.0, trials, ctx.rng.split("zero-delay"))
    ctx.expect("mismatch at zero delay", zero, 0.0, 0.0, EXACT)

    delay = ctx.params["rdelta"] / rate
    fraction = rdm.mismatch_fraction(cfg, delay, trials, ctx.rng.split("delay"))
    expected = rdm.expected_mismatch(cfg, delay)
    values["mismatch"] = fraction
    values["expected_mismatch"] = expected
    ctx.expect(
        "mismatch at r*delta",
        fraction,
        expected,
        4.0 * _binomial_sigma(expected, trials),
        MONTE_CARLO,
    )

    rdeltas = np.linspace(0.0, ctx.params["rdelta_max"], ctx.integer("delta_points"))
    series = []
    for j, rd in enumerate(rdeltas):
        f = rdm.mismatch_fraction(cfg, rd / rate, trials, ctx.rng.split(f"grid-{j}"))
        series.append((float(rd), float(rd / rate), f, _binomial_sigma(f, trials)))
    violations = sum(
        1
        for (_, _, f0, s0), (_, _, f1, s1) in zip(series, series[1:])
        if f1 < f0 - 4.0 * math.hypot(s0, s1)
    )
    ctx.expect("monotonicity violations on the delay grid", violations, 0.0, 0.0, MONTE_CARLO)
    ctx.table(
        "mismatch_series",
        ["rdelta", "delay", "fraction", "stderr", "expected"],
        [(rd, d, f, s, rdm.expected_mismatch(cfg, d)) for rd, d, f, s in series],
    )

    runs = ctx.integer("runs")
    stream = ctx.rng.split("occupation")
    first_position = cfg.configs[0][0]
    occupancy = []
    toggles = 0
    for _ in range(runs):
        trajectory = rdm.run_entangled(cfg, stream)
        toggles += rdm.toggle_count(trajectory)
        occupancy.append(rdm.occupation(trajectory, cfg.duration).get(first_position, 0.0))
    if runs >= 2:
        mean = float(np.mean(occupancy))
        sem = float(np.std(occupancy, ddof=1) / math.sqrt(runs))
        values["occupation_" + first_position] = mean
        values["mean_toggles"] = toggles / runs
        ctx.expect(
            f"time-averaged occupation of {first_position}", mean, w0, 4.0 * sem, MONTE_CARLO
        )


# csl-ensemble


def _run_csl(ctx: _Run, policies: Sequence[CollapsePolicy]):
    w0 = ctx.params["weight_0"]
    p = csl.SseParams(
        lam=ctx.params["lam"],
        dt=ctx.params["dt"],
        eigenvalues=(1.0, -1.0),
        max_steps=ctx.integer("max_steps"),
        eps_conv=ctx.params["eps_conv"],
    )
    initial = csl.SseState.from_weights([w0, 1.0 - w0])
    weights = initial.probabilities.tolist()

    for policy in policies:
        values = ctx.values(policy.value)
        if policy is CollapsePolicy.UNITARY_ONLY:
            # no stochastic term: the superposition persists and nothing is selected
            values["selected"] = False
            values.update({f"weight_{i}": w for i, w in enumerate(weights)})
            continue
        _csl_ensemble(ctx, p, initial, values)
        _csl_instability(ctx, p, initial, values)


def _csl_ensemble(ctx: _Run, p: csl.SseParams, initial: csl.SseState, values: Dict):
    weights = initial.probabilities.tolist()
    stats = csl.ensemble_stats(initial, p, ctx.integer("n_traj"), ctx.rng.split("ensemble"))
    values["converged"] = stats.converged
    values["nonphysical"] = stats.error_counts["nonphysical"]
    values["max_steps_exceeded"] = stats.error_counts["max_steps"]
    ctx.expect("converged trajectories", stats.converged, stats.n_traj, 0.0, EXACT)
    rows = []
    for i, (frequency, w) in enumerate(zip(stats.frequencies, weights)):
        sigma = _binomial_sigma(w, stats.converged)
        values[f"freq_{i}"] = frequency
        rows.append((i, frequency, w, sigma))
        ctx.expect(f"frequency of eigenstate {i}", frequency, w, 4.0 * sigma, MONTE_CARLO)
    ctx.table("frequencies", ["eigenstate", "frequency", "expected", "stderr"], rows)

    worst = 0.0
    series = []
    for step, means, sems in zip(
        stats.checkpoint_steps, stats.martingale_means, stats.martingale_sem
    ):
        for mean, sem, w in zip(means, sems, weights):
            worst = max(worst, abs(mean - w) / (sem + 1e-12))
        series.append((step, *means, *sems))
    values["martingale_worst_z"] = worst
    ctx.expect("martingale deviation in SEM units", worst, 0.0, 4.0, MONTE_CARLO)
    columns = ["step"] + [f"mean_{i}" for i in range(len(weights))]
    columns += [f"sem_{i}" for i in range(len(weights))]
    ctx.table("martingale_series", columns, series)


def _csl_instability(ctx: _Run, p: csl.SseParams, initial: csl.SseState, values: Dict):
    recorded = csl.run_trajectory(initial, p, ctx.rng.split("trajectory"))
    replayed = csl.replay_trajectory(initial, p, recorded.noise_sequence)
    identical = replayed.outcome == recorded.outcome and replayed.steps == recorded.steps
    ctx.expect("replay reproduces the trajectory", float(identical), 1.0, 0.0, EXACT)
    values["trajectory_outcome"] = recorded.outcome
    values["trajectory_steps"] = recorded.steps

    adversarial = csl.NoiseSequence([csl.adversarial_increment(initial, p)])
    diagnosis = csl.detect_nonphysical(adversarial, initial, p)
    values["adversarial_status"] = diagnosis.status
    ctx.expect(
        "adversarial increment fails at step",
        diagnosis.step if diagnosis.step is not None else -1,
        1.0,
        0.0,
        EXACT,
    )

    noise = recorded.noise_sequence
    baseline = csl.detect_nonphysical(noise, initial, p)
    values["flip_step"] = baseline.flip_step
    values["flip_scale"] = baseline.flip_scale
    window = np.abs(np.asarray(noise.increments[:20]))
    index = int(np.argmax(window))
    scale = ctx.params["perturb_scale"]
    perturbed = csl.perturbation_scan(noise, initial, p, index, scale)
    values["perturbed_step"] = index + 1
    values["perturbed_status"] = perturbed.status
    ctx.expect(
        f"replay with one increment scaled x{scale:g} leaves the ok regime",
        float(perturbed.status != "ok"),
        1.0,
        0.0,
        EXACT,
    )


@dataclass(frozen=True)
class ScenarioDefinition:
    name: str
    summary: str
    defaults: Mapping[str, float]
    runner: Callable[[_Run, Sequence[CollapsePolicy]], None]


SCENARIOS: Dict[str, ScenarioDefinition] = {
    d.name: d
    for d in (
        ScenarioDefinition(
            "hardy",
            "Path-entangled pair through BS+ and BS-: joint table, frame orderings, "
            "retrodiction contradiction for (D+, D-).",
            {"reflectivity_plus": 0.5, "reflectivity_minus": 0.5, "trials": 10_000},
            _run_hardy,
        ),
        ScenarioDefinition(
            "mz-histories",
            "Mach-Zehnder with phases on c and d: coherent fringes versus the "
            "featureless spot of the history mixture.",
            {
                "phi_c": 0.0,
                "phi_d": math.pi / 2.0,
                "kappa0": 2.0 * math.pi,
                "grid_points": 1024,
                "trials": 10_000,
            },
            _run_mz,
        ),
        ScenarioDefinition(
            "which-way",
            "Split photon feeding one detector at two times: avalanche growth, "
            "cross-branch witness and threshold selection.",
            {
                "phi": 0.0,
                "n_initial": 3,
                "growth": 2.0,
                "arrival_step": 2,
                "k_initial": 3,
                "n_macro": 1_000_000,
                "trials": 10_000,
            },
            _run_which_way,
        ),
        ScenarioDefinition(
            "triple-interference",
            "Three beams on a plate with a detector on b: background removal on "
            "no-click versus the three-beam map without reduction.",
            {
                "theta1": 0.0,
                "theta3": 0.0,
                "kappa0": 2.0 * math.pi,
                "grid_points": 1024,
                "trials": 10_000,
            },
            _run_triple,
        ),
        ScenarioDefinition(
            "rdm-delay",
            "Entangled pair jumping simultaneously between two joint configurations: "
            "mismatch of delayed readings.",
            {
                "jump_rate": 1.0,
                "rdelta": 0.5,
                "rdelta_max": 2.5,
                "delta_points": 10,
                "trials": 100_000,
                "tick": 1e-3,
                "weight_0": 0.5,
                "duration": 10.0,
                "runs": 200,
            },
            _run_rdm,
        ),
        ScenarioDefinition(
            "csl-ensemble",
            "Stochastic collapse over two eigenstates: Born frequencies, martingale "
            "checkpoints and non-physical replays.",
            {
                "lam": 1.0,
                "dt": 1e-3,
                "eps_conv": 1e-4,
                "n_traj": 10_000,
                "weight_0": 1.0 / 3.0,
                "max_steps": 1_000_000,
                "perturb_scale": 50.0,
            },
            _run_csl,
        ),
    )
}


def _definition(name: str) -> ScenarioDefinition:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise UnknownScenario(
            f"unknown scenario {name!r}; choose one of {', '.join(SCENARIOS)}"
        ) from None


def build(
    name: str, overrides: Optional[Mapping[str, float]] = None, seed: Optional[int] = None
) -> ScenarioSpec:
    definition = _definition(name)
    overrides = dict(overrides or {})
    unknown = sorted(set(overrides) - set(definition.defaults))
    if unknown:
        raise UnknownParameter(
            f"{name} has no parameter {', '.join(unknown)}; "
            f"known: {', '.join(sorted(definition.defaults))}"
        )
    parameters = {k: float(v) for k, v in definition.defaults.items()}
    for key, value in overrides.items():
        value = float(value)
        if not math.isfinite(value):
            raise UnknownParameter(f"parameter {key} must be finite, got {value}")
        parameters[key] = value
    return ScenarioSpec(
        name=name, parameters=parameters, seed=DEFAULT_SEED if seed is None else seed
    )


def load_spec(path: str) -> ScenarioSpec:
    """Reads a JSON or YAML scenario document with name, parameters and seed."""
    with open(path, "rb") as f:
        raw = f.read()
    if os.path.splitext(path)[1].lower() in (".yaml", ".yml"):
        document = yaml.safe_load(raw) or {}
    else:
        document = orjson.loads(raw)
    if not isinstance(document, dict) or "name" not in document:
        raise UnknownScenario(f"{path} does not name a scenario")
    return build(document["name"], document.get("parameters"), document.get("seed"))


def describe(name: str) -> str:
    definition = _definition(name)
    lines = [definition.name, "", definition.summary, "", "parameters:"]
    width = max(len(k) for k in definition.defaults)
    for key in sorted(definition.defaults):
        lines.append(f"  {key.ljust(width)}  {definition.defaults[key]!r}")
    return "\n".join(lines)


def run(
    spec: ScenarioSpec, policies: Iterable[CollapsePolicy] = ALL_POLICIES
) -> RunReport:
    definition = _definition(spec.name)
    spec = build(spec.name, spec.parameters, spec.seed)
    ordered = sorted({CollapsePolicy(p) for p in policies}, key=lambda p: p.value)
    if not ordered:
        raise ValueError("at least one collapse policy is required")
    ctx = _Run(spec)
    logger.info("running %s (seed %d) under %s", spec.name, spec.seed, [p.value for p in ordered])
    try:
        definition.runner(ctx, ordered)
    except ScenarioError:
        raise
    except (CollapseSimError, ValueError) as e:
        raise ScenarioError(spec.name, ctx.policy, e) from e
    report = ctx.report()
    logger.info(
        "%s: %d/%d expectations passed",
        spec.name,
        sum(e.passed for e in report.expectations),
        len(report.expectations),
    )
    return report
