"""
Batch command handlers: each subcommand runs one computation pipeline,
writes its CSV/JSON artifacts and returns (status_code, payload).
"""
import logging
import math
import os
from collections import OrderedDict
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import (
    INTERLEAVED,
    LEAKAGE_FREE,
    SEQUENCE_FIDELITY,
    STANDARD,
    EchoTrace,
    RBDataset,
    coherence_records,
    echo_noise_fit,
    error_budget,
    fit_decay,
    interleaved_error,
    leakage_error,
)
from .config import RunConfig
from .device_params import get_reference_values
from .dynamics import (
    CHEVRON_COLUMNS,
    chevron,
    evaluate_gate,
    extract_iswap_rate,
    hybridization_trace,
)
from .errors import SimulationError
from .pulse_optimizer import optimize_pulse, swap_duration
from .simulation_session import SimulationSession
from .spectrum import (
    CONVERGENCE_COLUMNS,
    M_MODE,
    P_MODE,
    STATE_01,
    STATE_10,
    SWEEP_COLUMNS,
    anharmonicities,
    hybridization,
    quasi_static_average,
    sideband_matrix_elements,
    static_zz,
)
from .toy_model import (
    analytic_dynamical_zz,
    analytic_iswap_rate,
    harmonic_decompose,
    semianalytic_sideband_zz,
    symmetric_curve,
    toy_params_from_circuit,
)
from .utils import log_command, read_csv_columns, write_csv, write_report
from .waveform import DriveWaveform

TWO_PI = 2.0 * math.pi
GHZ = TWO_PI * 1e9
MHZ = TWO_PI * 1e6
KHZ = TWO_PI * 1e3
NS = 1e-9
US = 1e-6

CHEVRON_FIT_COLUMNS = ("phi_d_over_2pi", "g_MHz", "g_err_MHz", "omega_res_MHz",
                       "omega_res_err_MHz", "kappa", "g_semianalytic_MHz",
                       "g_indirect_truncation_MHz", "error")
ZZ_COLUMNS = ("phi_d_over_2pi", "t_total_ns", "f_d_MHz", "infidelity", "leakage",
              "zeta_eff_kHz", "zeta_avg_kHz", "zeta_dyn_kHz", "zeta_dyn_sideband_kHz", "error")
TOY_COLUMNS = ("phi_d_over_2pi", "g_toy_Nc2_MHz", "g_toy_Nc3_MHz", "g_full_MHz",
               "zeta_dyn_toy_kHz", "zeta_dyn_full_kHz")
HYBRIDIZATION_COLUMNS = ("time_ns", "pbar_c_iswap", "pbar_c_cz")
SENSITIVITY_COLUMNS = ("flux_over_2pi", "q1_GHz", "q2_GHz", "p_GHz", "m_GHz")
WAVEFORM_COLUMNS = ("t_ns", "phi_ex_over_2pi")
WAVEFORM_STEP = 0.1 * NS


def _finite(value: Optional[float], unit: float = 1.0) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return value / unit


class CommandHandler:
    """Runs the batch subcommands against one RunConfig."""

    COMMANDS = ("spectrum", "chevron", "gate", "optimize", "zz", "toy", "rbfit", "coherence")

    def __init__(self, run_config: RunConfig, session: Optional[SimulationSession] = None):
        self.run_config = run_config
        self.session = session or SimulationSession(run_config)
        self.digest = run_config.digest()
        self.logger = logging.getLogger(__name__)

    def _path(self, name: str) -> str:
        return os.path.join(self.run_config.output_dir, name)

    def run(self, command: str, inputs: Sequence[str] = ()) -> Tuple[int, Dict[str, Any]]:
        """
        Dispatch one subcommand.

        Args:
            command: Subcommand name
            inputs: Data files for rbfit and coherence

        Returns:
            Tuple of (status_code, payload)
        """
        if command not in self.COMMANDS:
            raise ValueError(f"Unknown command '{command}', expected one of {self.COMMANDS}")
        log_command(command, "start", f"config {self.digest[:12]}")
        handler = getattr(self, f"cmd_{command}")
        status, payload = handler(inputs) if command in ("rbfit", "coherence") else handler()
        payload.setdefault("command", command)
        payload.setdefault("config_sha256", self.digest)
        log_command(command, "done" if status == 0 else "failed",
                    f"{len(payload.get('files', []))} files")
        return status, payload

    # Spectrum

    def cmd_spectrum(self) -> Tuple[int, Dict[str, Any]]:
        session = self.session
        table = session.sweep()
        sweep_path = write_csv(self._path("spectrum_sweep.csv"), SWEEP_COLUMNS,
                               table.csv_rows(), self.digest, "spectrum")
        files = [sweep_path]
        sensitivity_path = self._write_sensitivity(table)
        if sensitivity_path:
            files.append(sensitivity_path)

        spectrum = session.spectrum(0.0)
        alpha1, alpha2 = anharmonicities(spectrum)
        report = hybridization(0.0, spectrum, session.bare_basis(0.0))
        reference = get_reference_values()
        zeta = static_zz(spectrum)
        warnings = list(report.warnings)
        gate_amplitude = TWO_PI * self.run_config.waveform.amplitude_over_2pi
        indirect = self._indirect_summary(gate_amplitude, warnings)
        summary = {
            "charge_cutoff": session.simulation.charge_cutoff,
            "omega1_GHz": spectrum.frequency(STATE_10) / GHZ,
            "omega2_GHz": spectrum.frequency(STATE_01) / GHZ,
            "omegap_GHz": spectrum.frequency(P_MODE) / GHZ,
            "omegam_GHz": spectrum.frequency(M_MODE) / GHZ,
            "detuning_MHz": (spectrum.frequency(STATE_01) - spectrum.frequency(STATE_10)) / MHZ,
            "alpha1_MHz": alpha1 / MHZ,
            "alpha2_MHz": alpha2 / MHZ,
            "zeta_zero_flux_kHz": zeta / KHZ,
            "zeta_reference_kHz": reference["zz_zero_flux_khz"],
            "zz_minima": [{"flux_over_2pi": flux / TWO_PI, "zeta_kHz": value / KHZ}
                          for flux, value in table.zz_minima()],
            "pbar_c_zero_flux": report.average,
            "degenerate_labels": ["".join(map(str, label)) for label in spectrum.degenerate],
            "failed_points": [{"flux_over_2pi": p.flux / TWO_PI, "error": p.error}
                              for p in table.failures],
            "indirect_rate": indirect,
            "warnings": warnings,
        }
        convergence_path = self._write_convergence(warnings)
        if convergence_path:
            files.append(convergence_path)
        summary_path = write_report(self._path("spectrum_summary.json"), summary,
                                    self.digest, "spectrum")
        files.append(summary_path)
        partial = bool(table.failures) or len(warnings) > len(report.warnings)
        return 0, {"status": "partial" if partial else "success", "files": files,
                   "summary": summary}

    def _indirect_summary(self, amplitude: float, warnings: List[str]) -> Optional[Dict[str, Any]]:
        """Second-order rate at the gate amplitude with its cutoff truncation change."""
        try:
            indirect = self.session.indirect_rate(amplitude)
        except SimulationError as e:
            warnings.append(f"Indirect rate unavailable: {type(e).__name__}: {e}")
            return None
        return {
            "phi_d_over_2pi": amplitude / TWO_PI,
            "g_indirect_MHz": abs(indirect.value) / MHZ,
            "state_cutoff": indirect.state_cutoff,
            "reference_cutoff": indirect.reference_cutoff,
            "truncation_change_MHz": indirect.truncation_change / MHZ,
        }

    def _write_convergence(self, warnings: List[str]) -> Optional[str]:
        if not self.run_config.simulation.convergence_cutoffs:
            return None
        try:
            convergence = self.session.cutoff_convergence()
        except SimulationError as e:
            self.logger.warning(f"Cutoff convergence sweep failed: {e}")
            warnings.append(f"Cutoff convergence unavailable: {type(e).__name__}: {e}")
            return None
        return write_csv(self._path("cutoff_convergence.csv"), CONVERGENCE_COLUMNS,
                         convergence.csv_rows(), self.digest, "spectrum")

    def _write_sensitivity(self, table) -> Optional[str]:
        """d(omega/2pi)/d(phi_ex) per mode in GHz per rad, the unit echo files expect."""
        columns = []
        for name in ("omega1", "omega2", "omegap", "omegam"):
            try:
                columns.append(table.flux_sensitivity(name) / GHZ)
            except SimulationError as e:
                self.logger.warning(f"No flux sensitivity for {name}: {e}")
                return None
        rows = [[flux / TWO_PI, *values] for flux, *values in zip(table.fluxes, *columns)]
        return write_csv(self._path("flux_sensitivity.csv"), SENSITIVITY_COLUMNS, rows,
                         self.digest, "spectrum")

    # Chevron

    def cmd_chevron(self) -> Tuple[int, Dict[str, Any]]:
        session = self.session
        sweeps = self.run_config.sweeps
        model = session.reduced_model()
        frequencies = MHZ * np.asarray(sweeps.drive_frequency_mhz, dtype=float)
        times = NS * np.asarray(sweeps.time_ns, dtype=float)
        files: List[str] = []
        rows = []
        failures: Dict[str, str] = {}
        for amplitude_over_2pi in sweeps.drive_amplitude_over_2pi:
            amplitude = TWO_PI * amplitude_over_2pi
            maps = chevron(model, amplitude, frequencies, times, session.time_step,
                           session.threads, self.run_config.waveform.drive_phase_rad)
            files.append(write_csv(self._path(f"chevron_phi{amplitude_over_2pi:.4f}.csv"),
                                   CHEVRON_COLUMNS, maps.csv_rows(), self.digest, "chevron"))
            for frequency, message in maps.errors.items():
                failures[f"{amplitude_over_2pi:.4f}@{frequency / MHZ:.3f}MHz"] = message
            direct, indirect = session.semianalytic_rate(amplitude)
            semianalytic = abs(direct + indirect) / MHZ
            truncation = session.indirect_rate(amplitude).truncation_change / MHZ
            try:
                fit = extract_iswap_rate(maps)
                rows.append([amplitude_over_2pi, fit.rate / MHZ, fit.rate_error / MHZ,
                             fit.resonance / MHZ, fit.resonance_error / MHZ, fit.curvature,
                             semianalytic, truncation, ""])
            except SimulationError as e:
                self.logger.warning(f"Chevron fit at phi_d/2pi={amplitude_over_2pi:.4f} "
                                    f"failed: {e}")
                failures[f"{amplitude_over_2pi:.4f}"] = f"{type(e).__name__}: {e}"
                rows.append([amplitude_over_2pi, None, None, None, None, None, semianalytic,
                             truncation, type(e).__name__])
        files.append(write_csv(self._path("chevron_fits.csv"), CHEVRON_FIT_COLUMNS, rows,
                               self.digest, "chevron"))
        return 0, {"status": "success" if not failures else "partial", "files": files,
                   "fits": [dict(zip(CHEVRON_FIT_COLUMNS, row)) for row in rows],
                   "failures": failures}

    # Gate

    def _zeta_curve(self, warnings: List[str]):
        try:
            return self.session.curve("zeta")
        except SimulationError as e:
            warnings.append(f"Static ZZ curve unavailable: {e}")
            return None

    def _gate_report(self, metrics, wave: DriveWaveform, warnings: List[str]) -> Dict[str, Any]:
        report = OrderedDict(
            phi_d_over_2pi=wave.amplitude / TWO_PI,
            f_d_MHz=wave.frequency / MHZ,
            t_total_ns=wave.total_time / NS,
            fidelity=metrics.fidelity,
            infidelity=metrics.infidelity,
            leakage=metrics.leakage,
            zz_phase_rad=_finite(metrics.zz_phase),
            zeta_eff_kHz=_finite(metrics.zeta_eff, KHZ),
            zeta_avg_kHz=_finite(metrics.zeta_avg, KHZ),
            zeta_dyn_kHz=_finite(metrics.zeta_dyn, KHZ),
            process=metrics.process.table(),
            leakage_per_input=metrics.process.leakage_per_input.tolist(),
            unitarity_deficiency=metrics.process.unitarity_deficiency,
        )
        report["warnings"] = warnings
        return report

    def cmd_gate(self) -> Tuple[int, Dict[str, Any]]:
        session = self.session
        warnings: List[str] = []
        wave = session.gate_waveform()
        zeta_curve = self._zeta_curve(warnings)
        metrics = evaluate_gate(session.reduced_model(), wave, session.time_step, zeta_curve)
        report = self._gate_report(metrics, wave, warnings)
        files = [self._write_waveform(wave, "gate"),
                 self._write_hybridization(wave, report, warnings)]
        files = [path for path in files if path]
        files.append(write_report(self._path("gate_report.json"), report, self.digest, "gate"))
        return 0, {"status": "success", "files": files, "report": report}

    def _write_waveform(self, wave: DriveWaveform, command: str) -> str:
        times, flux = wave.sample(WAVEFORM_STEP)
        rows = [[t / NS, phi / TWO_PI] for t, phi in zip(times, flux)]
        return write_csv(self._path("waveform_samples.csv"), WAVEFORM_COLUMNS, rows,
                         self.digest, command)

    def _write_hybridization(self, wave: DriveWaveform, report: Dict[str, Any],
                             warnings: List[str]) -> Optional[str]:
        try:
            pbar_curve = self.session.curve("pbar_c")
            times, iswap = hybridization_trace(wave, pbar_curve)
        except SimulationError as e:
            warnings.append(f"Hybridization trace unavailable: {e}")
            return None
        cz = np.full_like(iswap, np.nan)
        settings = self.run_config.waveform
        if settings.cz_reference_amplitude_over_2pi is not None:
            reference = DriveWaveform.baseband(TWO_PI * settings.cz_reference_amplitude_over_2pi,
                                               wave.drive_duration, wave.idle_pad, wave.ramp)
            try:
                _, cz = hybridization_trace(reference, pbar_curve)
                report["pbar_c_cz_peak"] = float(np.max(cz))
            except SimulationError as e:
                warnings.append(f"CZ-reference trace unavailable: {e}")
        report["pbar_c_iswap_peak"] = float(np.max(iswap))
        rows = [[t / NS, p, None if np.isnan(c) else c] for t, p, c in zip(times, iswap, cz)]
        return write_csv(self._path("hybridization_trace.csv"), HYBRIDIZATION_COLUMNS, rows,
                         self.digest, "gate")

    # Optimize

    def cmd_optimize(self) -> Tuple[int, Dict[str, Any]]:
        session = self.session
        settings = self.run_config.waveform
        warnings: List[str] = []
        zeta_curve = self._zeta_curve(warnings)
        try:
            detuning_curve = session.detuning_curve()
        except SimulationError as e:
            warnings.append(f"Detuning curve unavailable: {e}")
            detuning_curve = None
        result = optimize_pulse(
            session.reduced_model(), session.gate_waveform(), session.time_step,
            amplitude_bounds=tuple(TWO_PI * v for v in settings.amplitude_bounds_over_2pi),
            frequency_bounds=tuple(MHZ * v for v in settings.frequency_bounds_mhz),
            rate_coefficient=session.rate_coefficient(),
            detuning_curve=detuning_curve,
            zeta_curve=zeta_curve,
        )
        warnings.extend(result.warnings)
        if result.metrics is None:
            return 1, {"status": "error", "error_type": "OptimizationError",
                       "message": "No objective evaluation succeeded", "warnings": warnings}
        wave = session.gate_waveform(result.amplitude, result.frequency)
        report = self._gate_report(result.metrics, wave, warnings)
        report.update(status=result.status, evaluations=result.evaluations,
                      start_phi_d_over_2pi=result.start[0] / TWO_PI,
                      start_f_d_MHz=result.start[1] / MHZ)
        files = [self._write_waveform(wave, "optimize"),
                 write_report(self._path("optimize_report.json"), report, self.digest,
                              "optimize")]
        return 0, {"status": result.status, "files": files, "report": report}

    # ZZ

    def cmd_zz(self) -> Tuple[int, Dict[str, Any]]:
        session = self.session
        warnings: List[str] = []
        zeta_curve = self._zeta_curve(warnings)
        detuning_curve = session.detuning_curve()
        coefficient = session.rate_coefficient()
        spectrum = session.spectrum(0.0)
        elements = sideband_matrix_elements(spectrum, session.operators)
        alpha1, alpha2 = anharmonicities(spectrum)
        template = session.gate_waveform()
        model = session.reduced_model()

        rows = []
        for amplitude_over_2pi in self.run_config.sweeps.zz_amplitude_over_2pi:
            amplitude = TWO_PI * amplitude_over_2pi
            sideband = semianalytic_sideband_zz(elements, amplitude, alpha1, alpha2,
                                                session.energies.coupler_frequency)
            try:
                frequency = 0.5 * abs(quasi_static_average(detuning_curve, amplitude))
                wave = swap_duration(template.with_drive(amplitude, frequency), amplitude,
                                     coefficient)
                metrics = evaluate_gate(model, wave, session.time_step, zeta_curve)
                rows.append([amplitude_over_2pi, wave.total_time / NS, frequency / MHZ,
                             metrics.infidelity, metrics.leakage,
                             _finite(metrics.zeta_eff, KHZ),
                             _finite(metrics.zeta_avg, KHZ),
                             _finite(metrics.zeta_dyn, KHZ),
                             sideband / KHZ, ""])
            except (SimulationError, ValueError) as e:
                self.logger.warning(f"ZZ point phi_d/2pi={amplitude_over_2pi:.4f} failed: {e}")
                warnings.append(f"{amplitude_over_2pi:.4f}: {type(e).__name__}: {e}")
                rows.append([amplitude_over_2pi, None, None, None, None, None, None, None,
                             sideband / KHZ, type(e).__name__])
        path = write_csv(self._path("zz_sweep.csv"), ZZ_COLUMNS, rows, self.digest, "zz")
        return 0, {"status": "success" if not warnings else "partial", "files": [path],
                   "rows": [dict(zip(ZZ_COLUMNS, row)) for row in rows], "warnings": warnings}

    # Toy model

    def cmd_toy(self) -> Tuple[int, Dict[str, Any]]:
        session = self.session
        table = session.sweep()
        omegam = table.column("omegam")
        mask = np.isfinite(omegam)
        curve = symmetric_curve(table.fluxes[mask], omegam[mask])
        spectrum = session.spectrum(0.0)
        alpha1, alpha2 = anharmonicities(spectrum)
        params = toy_params_from_circuit(session.energies, curve).with_frequencies(
            omega1=spectrum.frequency(STATE_10), omega2=spectrum.frequency(STATE_01),
            alpha1=alpha1, alpha2=alpha2)
        elements = sideband_matrix_elements(spectrum, session.operators)
        drive_frequency = 0.5 * params.detuning

        rows = []
        warnings: List[str] = []
        for amplitude_over_2pi in self.run_config.sweeps.zz_amplitude_over_2pi:
            amplitude = TWO_PI * amplitude_over_2pi
            direct, indirect = session.semianalytic_rate(amplitude)
            full_zz = semianalytic_sideband_zz(elements, amplitude, alpha1, alpha2,
                                               session.energies.coupler_frequency)
            try:
                decomposition = harmonic_decompose(curve, amplitude, drive_frequency)
                rate2 = analytic_iswap_rate(params, decomposition, 2)
                rate3 = analytic_iswap_rate(params, decomposition, 3)
                zz = analytic_dynamical_zz(params, decomposition, rate2.value)
                rows.append([amplitude_over_2pi, rate2.value / MHZ, rate3.value / MHZ,
                             abs(direct + indirect) / MHZ, zz.sideband / KHZ, full_zz / KHZ])
            except (SimulationError, ValueError) as e:
                warnings.append(f"{amplitude_over_2pi:.4f}: {type(e).__name__}: {e}")
                rows.append([amplitude_over_2pi, None, None, abs(direct + indirect) / MHZ,
                             None, full_zz / KHZ])
        path = write_csv(self._path("toy_comparison.csv"), TOY_COLUMNS, rows, self.digest, "toy")
        toy = {"omega1_GHz": params.omega1 / GHZ, "omega2_GHz": params.omega2 / GHZ,
               "omegap_GHz": params.omegap / GHZ, "omegam_GHz": float(curve(0.0)) / GHZ,
               "g1p_MHz": params.g1p / MHZ, "g1m_MHz": params.g1m / MHZ,
               "g2p_MHz": params.g2p / MHZ, "g2m_MHz": params.g2m / MHZ}
        return 0, {"status": "success" if not warnings else "partial", "files": [path],
                   "toy_params": toy, "rows": [dict(zip(TOY_COLUMNS, row)) for row in rows],
                   "warnings": warnings}

    # Randomized benchmarking

    def cmd_rbfit(self, inputs: Sequence[str]) -> Tuple[int, Dict[str, Any]]:
        """
        Inputs: standard and interleaved sequence-fidelity CSVs, optionally
        followed by the standard and interleaved leakage-free CSVs.
        """
        if len(inputs) not in (2, 4):
            raise ValueError("rbfit expects 2 files (SRB, IRB) or 4 (plus their "
                             "leakage-free decays)")
        srb = fit_decay(RBDataset.from_csv(inputs[0], SEQUENCE_FIDELITY, STANDARD))
        irb = fit_decay(RBDataset.from_csv(inputs[1], SEQUENCE_FIDELITY, INTERLEAVED))
        gate = interleaved_error(srb.decay, irb.decay, lambda_srb_err=srb.decay_err,
                                 lambda_irb_err=irb.decay_err)
        fits = {"srb": srb, "irb": irb}
        if len(inputs) == 4:
            srb_leak = fit_decay(RBDataset.from_csv(inputs[2], LEAKAGE_FREE, STANDARD))
            irb_leak = fit_decay(RBDataset.from_csv(inputs[3], LEAKAGE_FREE, INTERLEAVED))
            leakage = leakage_error(srb_leak.decay, irb_leak.decay,
                                    lambda_srb_err=srb_leak.decay_err,
                                    lambda_irb_err=irb_leak.decay_err)
            fits.update(srb_leakage=srb_leak, irb_leakage=irb_leak)
        else:
            leakage = leakage_error(1.0, 1.0)

        settings = self.run_config.waveform
        budget = error_budget(gate, leakage, total_time=settings.total_time_ns * NS,
                              idle_pad=settings.idle_pad_ns * NS,
                              coherence=self.run_config.coherence)
        report: Dict[str, Any] = {
            "fits": {name: {"A": fit.amplitude, "A_err": fit.amplitude_err,
                            "lambda": fit.decay, "lambda_err": fit.decay_err,
                            "B": fit.offset, "B_err": fit.offset_err,
                            "residual_norm": fit.residual_norm, "physical": fit.physical,
                            "warnings": list(fit.warnings)}
                     for name, fit in fits.items()},
            "r_srb": gate.reference, "r_irb": gate.interleaved,
            "l1_srb": leakage.reference, "l1_irb": leakage.interleaved,
            "budget": budget.as_report(),
        }
        path = write_report(self._path("rbfit_report.json"), report, self.digest, "rbfit")
        unphysical = [name for name, fit in fits.items() if not fit.physical]
        return 0, {"status": "success" if not unphysical else "warning", "files": [path],
                   "report": report}

    # Coherence

    def cmd_coherence(self, inputs: Sequence[str]) -> Tuple[int, Dict[str, Any]]:
        """
        Inputs: echo CSVs with columns trace, mode, sensitivity_GHz (d omega/2pi
        per rad of flux), time_us and value.
        """
        records = coherence_records(self.run_config.coherence)
        report: Dict[str, Any] = {
            "modes": [{"mode": r.mode, "t1_us": r.t1 / US, "t2_star_us": r.t2_star / US,
                       "t2_echo_us": r.t2_echo / US, "t_idle_us": 1.0 / r.idle_rate / US,
                       "t_phi_echo_us": r.echo_dephasing_time / US} for r in records],
        }
        if inputs:
            traces = self._read_echo_traces(inputs)
            fit = echo_noise_fit(traces)
            report["echo_fits"] = [{"mode": t.mode, "sensitivity_GHz": t.sensitivity / GHZ,
                                    "gamma_exp_per_us": t.gamma_exp * US,
                                    "gamma_exp_err_per_us": t.gamma_exp_err * US,
                                    "gamma_phi_echo_per_us": t.gamma_phi_echo * US,
                                    "gamma_phi_echo_err_per_us": t.gamma_phi_echo_err * US}
                                   for t in fit.traces]
            report["sqrt_flux_noise_uphi0"] = fit.sqrt_amplitude_micro_phi0
            report["intercept_per_us"] = fit.intercept * US
            report["warnings"] = list(fit.warnings)
        path = write_report(self._path("coherence_report.json"), report, self.digest,
                            "coherence")
        return 0, {"status": "success", "files": [path], "report": report}

    @staticmethod
    def _read_echo_traces(paths: Sequence[str]) -> List[EchoTrace]:
        grouped: Dict[str, Dict[str, Any]] = OrderedDict()
        for path in paths:
            columns = read_csv_columns(path)
            required = ("trace", "mode", "sensitivity_GHz", "time_us", "value")
            missing = [name for name in required if name not in columns]
            if missing:
                raise ValueError(f"{path}: echo file lacks columns {missing}")
            for row in zip(*(columns[name] for name in required)):
                trace, mode, sensitivity, time, value = row
                entry = grouped.setdefault(f"{path}:{trace}", {
                    "mode": mode, "sensitivity": float(sensitivity) * GHZ,
                    "times": [], "values": []})
                entry["times"].append(float(time) * US)
                entry["values"].append(float(value))
        return [EchoTrace(mode=entry["mode"], times=np.array(entry["times"]),
                          values=np.array(entry["values"]), sensitivity=entry["sensitivity"])
                for entry in grouped.values()]
