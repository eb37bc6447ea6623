"""Command-line harness: build-model, run, verify."""
from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import experiments as ex
from .errors import ConfigError, GapClosed, MbqcSptError, NotFactorized, NotInPhase, SizeOverflow
from .io import (ExperimentConfig, fmt, load_config, model_file_text, parse_config, write_csv, write_manifest,
                 write_protocol_file, atomic_write)

DENSE_QUBIT_LIMIT = 20
GROUP_NAMES = {0: "1", 1: "x", 2: "z", 3: "xz"}


# ----------------------------------------------------------------------------
# model construction


def build_model(cfg: ExperimentConfig):
    """(H, S, extra) for the configured family; ``extra`` holds family-specific data."""
    from .models import (Layout2D, SymmetryAction, cluster_2d_hamiltonian, cluster_chain_hamiltonian,
                         conjugate_by_cz, cz_duality, layout_symmetry_generators, quasi1d_hamiltonian,
                         random_symmetric_perturbation, sublattice_zz_perturbation, transverse_field_perturbation,
                         z_field_perturbation)
    from .symmetry import z2z2

    m = cfg.model
    extra = {}
    if m["family"] == "cluster":
        H, S = cluster_chain_hamiltonian(m["sites"], m["boundary"])
    elif m["family"] == "quasi1d":
        H, S = quasi1d_hamiltonian(m["chains"], m["columns"], terminated=m["boundary"] == "terminated")
    else:
        if m["layout"] == "diagonal":
            lay = Layout2D.diagonal(m["width"], m["height"])
        else:
            lay = Layout2D.horizontal(m["chains"], m["width"])
        H = cluster_2d_hamiltonian(lay)
        S = SymmetryAction.from_generators(z2z2(len(lay.chains)), layout_symmetry_generators(lay))
        extra["image"] = conjugate_by_cz(H, cz_duality(lay))
        extra["layout"] = lay
    if H.n_qubits > DENSE_QUBIT_LIMIT + 8:
        raise SizeOverflow(f"model has {H.n_qubits} qubits; dense tools support at most {DENSE_QUBIT_LIMIT} "
                           f"(cluster chains up to {(DENSE_QUBIT_LIMIT - 2) // 2} sites)")
    chain = [q for s in H.sites for q in s] if H.sites else list(range(H.n_qubits))
    p, B = m["perturbation"], m["strength"]
    if p == "transverse":
        H = H + transverse_field_perturbation(B, chain, H.n_qubits)
    elif p == "zfield":
        H = H + z_field_perturbation(B, chain, H.n_qubits)
    elif p == "zz":
        H = H + sublattice_zz_perturbation(B, H)
    elif p == "random":
        H = H + random_symmetric_perturbation(B, H, S, m["range"], seed=cfg.seed)
    return H, S, extra


def cmd_build_model(cfg: ExperimentConfig, out: Path, workers: int = 1, tol=None) -> int:
    from .models import check_symmetry
    t0 = time.time()
    H, S, extra = build_model(cfg)
    resid = check_symmetry(H, S)
    print(f"symmetry residual {fmt(resid)}")
    outputs = [out / "model.txt", out / "terms.csv"]
    atomic_write(out / "model.txt", model_file_text(cfg))
    write_csv(out / "terms.csv", ("support", "pauli", "coefficient"), H.to_csv_rows())
    if "image" in extra:
        write_csv(out / "image_terms.csv", ("support", "pauli", "coefficient"), extra["image"].to_csv_rows())
        outputs.append(out / "image_terms.csv")
        print(f"duality image written: {len(extra['image'].terms)} terms on {extra['image'].n_qubits} qubits")
    write_csv(out / "symmetry.csv", ("group_order", "residual"), [(S.group.order, resid)])
    outputs.append(out / "symmetry.csv")
    write_manifest(out / "manifest.json", cfg, "build-model", outputs, time.time() - t0)
    return 0


# ----------------------------------------------------------------------------
# protocol run


def cmd_run(cfg: ExperimentConfig, out: Path, workers: int = 1, tol=None) -> int:
    from .ground_state import exact_ground_state
    from .mbqc import build_couplings, chain_protocol, circuit_output, dual_process_from_state, run_adaptive
    from .spt_dual import disentangler, dual_state, extract_protected_decomposition
    from .ground_state import cluster_tensor
    from .tensors import trace_distance

    t0 = time.time()
    m = cfg.model
    if m["family"] != "cluster" or m["boundary"] != "terminated":
        raise ConfigError("run needs family = cluster with boundary = terminated")
    n = m["sites"]
    if 2 * n + 2 > DENSE_QUBIT_LIMIT:
        raise SizeOverflow(f"{n} sites need {2 * n + 2} qubits; the dense simulator supports at most "
                           f"{DENSE_QUBIT_LIMIT} qubits (sites <= {(DENSE_QUBIT_LIMIT - 2) // 2})")
    gates = cfg.gates()
    bad = [s for s in gates if not 0 < s < n - 1]
    if bad:
        raise ConfigError(f"gate sites {bad} must lie strictly between the init and readout sites")
    H, S, _ = build_model(cfg)
    v, rep = exact_ground_state(H)
    if rep.multiplicity > 1 or rep.gap < 1e-3:
        raise GapClosed(f"ground state not gapped (gap {rep.gap:.3e}, multiplicity {rep.multiplicity})",
                        s_star=m["strength"], gap=rep.gap)
    psi = v[:, 0]
    try:
        bulk, _ = dual_state(psi.reshape([2] + [4] * n + [2]), disentangler(n))
    except NotFactorized as exc:
        raise NotInPhase(f"{m['perturbation']} perturbation of strength {m['strength']}: {exc}") from exc
    P = chain_protocol(n, gates)
    ideal = circuit_output(P)
    outputs = []
    results = {}
    for mode in ("enumerate", "sample"):
        rho, tr = run_adaptive(psi, P, mode, seed=cfg.seed)
        results[mode] = rho
        rows = [(site, a, prob, GROUP_NAMES.get(P.actions[site].g_alpha[a], str(P.actions[site].g_alpha[a])))
                for site, a, prob in tr]
        path = out / f"transcript_{mode}.csv"
        write_csv(path, ("site", "outcome", "probability", "correction"), rows)
        outputs.append(path)
    dec = extract_protected_decomposition(cluster_tensor())
    rd = dual_process_from_state(bulk, P, dec)
    rho = results[cfg.protocol["mode"] if cfg.protocol["mode"] != "postselect" else "enumerate"]
    w, U = np.linalg.eigh(ideal)
    target = U[:, -1]
    fid = float(np.vdot(target, rho @ target).real)
    dual_td = trace_distance(rd, results["enumerate"])
    print(f"fidelity {fid:.9f}")
    print(f"dual-process trace distance {fmt(dual_td)}")
    rows = [(i, j, rho[i, j].real, rho[i, j].imag) for i in range(rho.shape[0]) for j in range(rho.shape[1])]
    write_csv(out / "output_state.csv", ("row", "col", "re", "im"), rows)
    write_csv(out / "summary.csv", ("quantity", "value"),
              [("fidelity", fid), ("dual_trace_distance", dual_td), ("gap", rep.gap),
               ("ground_energy", rep.energies[0])])
    write_protocol_file(out / "protocol.txt", gates, n)
    outputs += [out / "output_state.csv", out / "summary.csv", out / "protocol.txt"]
    write_manifest(out / "manifest.json", cfg, "run", outputs, time.time() - t0)
    return 0


# ----------------------------------------------------------------------------
# verification suites


def _merge(results, name):
    res = ex.SuiteResult(name)
    for r in results:
        res.checks += r.checks
        for k, (hdr, rows) in r.tables.items():
            if k in res.tables:
                res.tables[k][1].extend(rows)
            else:
                res.tables[k] = (hdr, list(rows))
    return res


def _call(args):
    fn, kwargs = args
    return fn(**kwargs)


def run_suite(which: str, cfg: ExperimentConfig, workers: int = 1, tol=None) -> ex.SuiteResult:
    sw = cfg.sweep
    Bs = list(sw["B"])
    if which == "theorem1":
        R = list(sw["R"])
        return ex.suite_theorem1(max(7, max(R) + 3), sw["B_theorem1"], R, tol=tol)
    if which == "bounds":
        return ex.suite_bounds(Bs, seed=cfg.seed, tol=tol)
    if which == "appendixD":
        return ex.suite_appendix_d(sw["S"], sw["steps"], path_max=sw["path_max"], path_steps=sw["path_steps"],
                                   gap_sites=sw["gap_sites"], tol=tol)
    if which == "kt":
        return ex.suite_kt(seed=cfg.seed, tol=tol)
    if which == "spectrum":
        fn = ex.suite_spectrum
        jobs = [dict(B_values=(B,), control=None, tol=tol) for B in Bs if B <= 0.3]
        jobs.append(dict(B_values=(), control=0.2, tol=tol))
    elif which == "appendixC":
        fn, jobs = ex.suite_appendix_c, [dict(B_values=(B,), seed=cfg.seed, tol=tol) for B in Bs]
    else:
        raise ConfigError(f"unknown suite {which!r}")
    tasks = [(fn, j) for j in jobs]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_call, tasks))
    else:
        parts = [_call(t) for t in tasks]
    return _merge(parts, which)


def cmd_verify(cfg: ExperimentConfig, out: Path, which: str, workers: int = 1, tol=None) -> int:
    t0 = time.time()
    res = run_suite(which, cfg, workers, tol)
    outputs = []
    for name, (hdr, rows) in res.tables.items():
        write_csv(out / name, hdr, rows)
        outputs.append(out / name)
    for label, ok, detail in res.checks:
        print(f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else ""))
    print(f"{which}: {'PASS' if res.passed else 'FAIL'}")
    write_manifest(out / "manifest.json", cfg, f"verify {which}", outputs, time.time() - t0)
    return 0 if res.passed else 1


# ----------------------------------------------------------------------------


def _tolerance(s: str):
    if "=" not in s:
        raise argparse.ArgumentTypeError("expected NAME=VALUE")
    k, v = s.split("=", 1)
    if k not in ex.DEFAULT_TOL:
        raise argparse.ArgumentTypeError(f"unknown tolerance {k!r}; known: {', '.join(ex.DEFAULT_TOL)}")
    try:
        return k, float(v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad tolerance value {v!r}") from None


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config (flat key-value with [sections])")
    common.add_argument("--seed", type=int, help="RNG seed (overrides [run] seed)")
    common.add_argument("--workers", type=int, default=1, help="parallel workers for sweeps")
    common.add_argument("--out", type=Path, help="output directory (overrides [run] out)")
    common.add_argument("--tolerance", type=_tolerance, action="append", default=[], metavar="NAME=VALUE")
    p = argparse.ArgumentParser(prog="mbqc-spt", description="MBQC on symmetry-protected phases: "
                                "models, dual processes and noise analysis.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("build-model", parents=[common], help="build a model and report its symmetry residual")
    sub.add_parser("run", parents=[common], help="run a chain protocol: ground state, dual, MBQC")
    v = sub.add_parser("verify", parents=[common], help="run a verification suite")
    v.add_argument("which", choices=ex.SUITES)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else parse_config("", "<defaults>")
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2 ** 64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg.run["seed"] = args.seed
        out = Path(args.out if args.out is not None else cfg.run["out"])
        tol = dict(args.tolerance)
        cfg.tolerances = tol
        if args.command == "build-model":
            return cmd_build_model(cfg, out, args.workers, tol)
        if args.command == "run":
            return cmd_run(cfg, out, args.workers, tol)
        return cmd_verify(cfg, out, args.which, args.workers, tol)
    except MbqcSptError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
