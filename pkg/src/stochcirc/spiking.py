"""Spiking realization of the discrete-sample gate: exponential first-spike races.

Each candidate value gets one unit firing with rate lambda_i = 2^(-e_i)
(base 2 to match the energy coding; concretely the rate is the candidate's
integer weight scaled so the minimum-energy unit has rate one). The winner
is the unit with the smallest first-spike time — fast lateral inhibition —
and since the minimum of exponentials selects index i with probability
lambda_i / sum(lambda), a race is exactly one draw from the gate's declared
distribution. Saturated energies give rate zero and never fire.

Assemblies are clocked quasi-synchronously: each schedule group occupies
one unit epoch, all races of the group run inside it, and spike times are
the raw exponential draws offset by the epoch start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .entropy import EntropyStream
from .errors import ConfigError, NoSupportError, ScheduleViolationError
from .lowprec import MULTIPLIER_BITS, EnergyVector, integer_weights
from .transition import GibbsKernel, TransitionAssembly, Trace, validate_schedule


def _rates_from_raw(raws, fmt) -> list[float]:
    weights = integer_weights(raws, fmt)
    qmax = fmt.max_raw >> fmt.frac
    scale = 2.0 ** -(qmax + MULTIPLIER_BITS)
    return [w * scale for w in weights]


def _rates_from_float(energies) -> list[float]:
    emin = min(energies)
    if emin == math.inf:
        raise NoSupportError("all energies saturated: no unit can fire")
    return [2.0 ** -(e - emin) for e in energies]


def _race(rates, stream: EntropyStream):
    """Draw first-spike times for positive rates; returns (winner, times)."""
    times = []
    winner = -1
    best = math.inf
    for i, lam in enumerate(rates):
        if lam <= 0.0:
            times.append(math.inf)
            continue
        u = 1.0 - stream.next_unit()  # in (0, 1]
        t = -math.log(u) / lam
        times.append(t)
        if t < best:
            best = t
            winner = i
    if winner < 0:
        raise NoSupportError("all energies saturated: no unit can fire")
    return winner, times


def race_sample(energies: EnergyVector, stream: EntropyStream):
    """One race over an energy vector: (winner index, first-spike times)."""
    return _race(_rates_from_raw(energies.raws, energies.fmt), stream)


@dataclass
class SpikeRaster:
    """First-spike events and winner transitions, tagged with their epoch.

    Spike times are epoch_start + raw exponential draw; with no refractory
    modeling a draw may overshoot its unit epoch, so the epoch index is kept
    explicitly. The CSV projection is (time, variable, unit).
    """

    events: list[tuple[int, float, str, int]] = field(default_factory=list)
    transitions: list[tuple[int, float, str, int]] = field(default_factory=list)

    def events_csv(self) -> str:
        lines = ["time,variable,unit"]
        for _epoch, t, var, unit in self.events:
            lines.append(f"{t!r},{var},{unit}")
        return "\n".join(lines) + "\n"


def simulate_spiking_assembly(assembly: TransitionAssembly, sweeps: int,
                              burn_in: int | None = None, thin: int = 1,
                              record_raster: bool = True):
    """Run an assembly with every transition realized as a spike race.

    Only Gibbs kernels expose the per-value conditional energies a race
    needs. Returns (SpikeRaster, Trace); the trace is a valid Gibbs
    trajectory with the same recording rules as transition.run.
    """
    violations = validate_schedule(assembly)
    if violations:
        raise ScheduleViolationError(
            f"schedule updates interacting circuits together: {violations}", violations)
    for circ in assembly.circuits.values():
        if not isinstance(circ.kernel, GibbsKernel):
            raise ConfigError("spiking simulation requires Gibbs kernels")
    if burn_in is None:
        burn_in = 10 * len(assembly.circuits)
    var_names = sorted(assembly.circuits)
    state = assembly.state
    raster = SpikeRaster()
    rows = []
    epoch = 0
    for sweep in range(burn_in + sweeps):
        for group in assembly.schedule:
            live = [n for n in group if n not in assembly.clamped]
            epoch_start = float(epoch)
            if live:
                snapshot = dict(state)
                for name in live:
                    circ = assembly.circuits[name]
                    kernel = circ.kernel
                    energies = kernel.conditional_energies(snapshot)
                    if kernel.fmt is None:
                        rates = _rates_from_float(energies)
                    else:
                        rates = _rates_from_raw(energies, kernel.fmt)
                    try:
                        winner, times = _race(rates, circ.stream)
                    except NoSupportError:
                        raise NoSupportError(
                            f"variable {name!r}: conditional has no support",
                            variable=name) from None
                    if record_raster:
                        for unit, t in enumerate(times):
                            if math.isfinite(t):
                                raster.events.append(
                                    (epoch, epoch_start + t, name, unit))
                        raster.transitions.append(
                            (epoch, epoch_start + times[winner], name, winner))
                    state[name] = winner
            epoch += 1
        if sweep >= burn_in and (sweep - burn_in) % thin == 0:
            rows.append(tuple(state[n] for n in var_names))
    meta = {"sweeps": sweeps, "burn_in": burn_in, "thin": thin,
            "epochs": epoch, "clamped": dict(assembly.clamped)}
    meta.update(assembly.meta)
    return raster, Trace(var_names, rows, meta)
