"""Command line entry point.

Subcommands: invariants, table1, verify, census, gen-dataset, toy.
Exit codes: 0 success, 2 precondition violation, 3 property failure,
4 numeric degeneracy. The environment variable NEUROCNN_SEED overrides the
default seed. Structured outputs are JSON (floats written with 17
significant digits) carrying a run manifest; table1 emits plain CSV.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__, census as census_mod, fibers, invariants, jacobian
from . import network, regression
from .conv import Architecture, validate_architecture
from .errors import NeurocnnError, PreconditionError, PropertyError
from .invariants import DEPTH2_GED_KNOWN


def parse_arch(spec: str) -> Architecture:
    """Parse "d0=<int>;k=<int,int,...>;s=<int,...>;r=<int>" (no spaces)."""
    fields = {}
    try:
        for part in spec.strip().split(";"):
            key, value = part.split("=", 1)
            fields[key] = value
        d0 = int(fields["d0"])
        k = [int(v) for v in fields["k"].split(",")]
        s = [int(v) for v in fields["s"].split(",")]
        r = int(fields["r"])
    except (KeyError, ValueError) as exc:
        raise PreconditionError(f"bad architecture spec {spec!r}: {exc}") from exc
    return validate_architecture(d0, k, s, r)


def _json_fragment(obj) -> str:
    """JSON with floats at 17 significant digits for exact round trips."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return json.dumps(v) if not np.isfinite(v) else f"{v:.17g}"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        inner = ",".join(f"{json.dumps(str(k))}:{_json_fragment(v)}" for k, v in obj.items())
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_json_fragment(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj)}")


def emit_json(payload: dict, command: str, arch: str | None, seeds: dict, out=None):
    body = _json_fragment(payload)
    manifest = {
        "command": command,
        "arch": arch,
        "seeds": seeds,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "digest": hashlib.sha256(body.encode()).hexdigest(),
    }
    text = '{"manifest":' + _json_fragment(manifest) + ',"report":' + body + "}"
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def default_seed(value):
    if value is not None:
        return int(value)
    env = os.environ.get("NEUROCNN_SEED")
    return int(env) if env else 0


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_invariants(args) -> int:
    arch = parse_arch(args.arch)
    if args.formula_only:
        payload = {"ged": invariants.ged_neuromanifold(arch)}
    else:
        payload = invariants.invariant_report(arch).as_dict()
    emit_json(payload, "invariants", args.arch, {}, out=args.out)
    return 0


def cmd_table1(args) -> int:
    grid = invariants.ged_depth2_grid()
    lines = ["r,k2,k3,k4,k5,k6"]
    for r, row in zip(range(1, 7), grid):
        lines.append(",".join([str(r)] + [str(v) for v in row]))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen_dataset(args) -> int:
    arch = parse_arch(args.arch)
    seed = default_seed(args.seed)
    n = args.n if args.n is not None else regression.default_dataset_size(arch)
    data = regression.generate_dataset(arch, n, mode=args.mode, noise=args.noise,
                                       seed=seed)
    data.save_jsonl(args.out)
    print(f"wrote {n} pairs to {args.out}")
    return 0


def cmd_census(args) -> int:
    arch = parse_arch(args.arch)
    seed = default_seed(args.seed)
    if args.dataset:
        data = regression.Dataset.load_jsonl(args.dataset)
        gen_seed = None
    else:
        gen_seed = args.gen_seed if args.gen_seed is not None else seed + 1
        n = args.n if args.n is not None else regression.default_dataset_size(arch)
        data = regression.generate_dataset(arch, n, mode=args.mode,
                                           noise=args.noise, seed=gen_seed)
    report = census_mod.census(arch, data, n_starts=args.starts, seed=seed,
                               n_jobs=args.threads)
    seeds = {"seed": seed}
    if gen_seed is not None:
        seeds["gen_seed"] = gen_seed
    emit_json(report.as_dict(), "census", args.arch, seeds, out=args.out)
    return 0


def cmd_toy(args) -> int:
    arch = validate_architecture(3, [2, 2], [1, 1], 2)
    seed = default_seed(args.seed)
    rep = invariants.invariant_report(arch)
    print(f"architecture   {arch.spec_string()}  (two layers, quadratic activation)")
    print(f"dimension      {rep.dim}")
    print(f"degree         {rep.degree}")
    print(f"gED            {rep.ged}")
    names = ["a", "b", "c", "d", "x0", "x1", "x2"]
    print("coefficients of the output polynomial:")
    q = network.bigraded_network(arch)[0]
    by_x = {}
    for e, cf in q.items():
        xkey = e[4:]
        mono = "*".join(f"{names[i]}^{p}" if p > 1 else names[i]
                        for i, p in enumerate(e[:4]) if p)
        term = f"{cf}*{mono}" if cf != 1 else mono
        by_x.setdefault(xkey, []).append(term)
    for xkey in sorted(by_x, reverse=True):
        mono = "*".join(f"{names[4 + i]}^{p}" if p > 1 else names[4 + i]
                        for i, p in enumerate(xkey) if p)
        print(f"  [{mono}]  {' + '.join(by_x[xkey])}")
    w1 = network.WeightTuple([[1.0, 1.0], [1.0, 1.0]])
    basis = jacobian.claimed_kernel_basis(arch, w1)
    print(f"kernel basis at all-ones weights: {[list(v) for v in basis]}")
    data = regression.generate_dataset(arch, regression.default_dataset_size(arch),
                                       seed=seed + 1)
    report = census_mod.census(arch, data, n_starts=args.starts, seed=seed)
    c = report.counts
    print(f"census ({args.starts} starts): {c['smooth']} distinct smooth stationary "
          f"points <= gED {report.ged}")
    print(f"  minima {c['min']}, saddles {c['saddle']}, maxima {c['max']}, "
          f"cone vertex hits {c['cone_vertex']}, nonconverged {c['nonconverged']}")
    return 0


# ---------------------------------------------------------------------------
# verify suites
# ---------------------------------------------------------------------------

def _default_archs():
    return [
        validate_architecture(3, [2, 2], [1, 1], 2),
        validate_architecture(4, [3, 2], [1, 1], 2),
        validate_architecture(4, [2, 2, 2], [1, 1, 1], 2),
        validate_architecture(7, [3, 3], [2, 1], 3),
        validate_architecture(8, [2, 3], [1, 2], 3),
        validate_architecture(5, [2, 2], [1, 1], 3),
    ]


def _check(results, name, passed, detail=""):
    results.append({"name": name, "status": "pass" if passed else "fail",
                    "detail": detail})


def verify_conv(seed: int) -> list[dict]:
    from . import conv
    from .poly import poly_mul
    rng = np.random.default_rng(seed)
    results = []

    trials, ok = 100, 0
    for _ in range(trials):
        k = int(rng.integers(1, 6))
        s = int(rng.integers(1, 4))
        d_out = int(rng.integers(1, 7))
        w = rng.standard_normal(k)
        ok += conv.toeplitz_rank(w, s, d_out) == d_out
    _check(results, "conv.full_rank", ok == trials, f"{ok}/{trials} full")

    trials, ok = 50, 0
    for _ in range(trials):
        kv, kw = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        t = int(rng.integers(1, 4))
        v = [int(z) for z in rng.integers(-5, 6, kv)]
        w = [int(z) for z in rng.integers(-5, 6, kw)]
        q = conv.compose_filters(v, t, w)
        ok += conv.filter_to_poly(q, 1) == poly_mul(conv.filter_to_poly(v, t),
                                                    conv.filter_to_poly(w, 1))
    _check(results, "conv.composition_polynomial_identity", ok == trials,
           f"{ok}/{trials} exact")

    trials, worst = 50, 0.0
    for _ in range(trials):
        k = int(rng.integers(1, 6))
        s = int(rng.integers(1, 4))
        d_out = int(rng.integers(1, 7))
        w = rng.standard_normal(k)
        x = rng.standard_normal(s * (d_out - 1) + k)
        err = np.abs(conv.toeplitz(w, s, d_out) @ x - conv.convolve(w, s, x)).max()
        worst = max(worst, float(err))
    _check(results, "conv.toeplitz_matches_convolve", worst < 1e-12, f"max err {worst:.2e}")

    trials, ok = 50, 0
    for _ in range(trials):
        L = int(rng.integers(1, 4))
        k = [int(rng.integers(1, 5)) for _ in range(L)]
        s = [int(rng.integers(1, 4)) for _ in range(L)]
        d_out = int(rng.integers(1, 5))
        d0 = conv.input_width(k, s, d_out)
        ok += conv.validate_architecture(d0, k, s, 2).d[-1] == d_out
    _check(results, "conv.width_chain_round_trip", ok == trials, f"{ok}/{trials}")
    return results


def verify_jacobian(seed: int, arch: Architecture | None = None) -> list[dict]:
    if arch is not None and arch.r == 1:
        return [{"name": "jacobian.regularity", "status": "skipped",
                 "detail": "regularity needs activation exponent r > 1; "
                           "linear networks are outside this suite"}]
    archs = [arch] if arch is not None else _default_archs()
    rng = np.random.default_rng(seed)
    results = []
    n_per = max(1, 300 // len(archs))
    kd_ok = basis_ok = angle_ok = rank_ok = scale_ok = total = 0
    for a in archs:
        for _ in range(n_per):
            w = network.WeightTuple([rng.standard_normal(ki) for ki in a.k])
            total += 1
            kd_ok += jacobian.kernel_dim(a, w) == a.L - 1
            J = jacobian.jacobian(a, w, check=True)
            rank_ok += np.linalg.matrix_rank(J, tol=1e-7 * np.linalg.svd(J, compute_uv=False)[0]) \
                == a.total_k - a.L + 1
            if a.L > 1:
                basis = jacobian.claimed_kernel_basis(a, w)
                basis_ok += all(np.linalg.norm(J @ v) < 1e-10 for v in basis)
            else:
                basis_ok += 1
            angle_ok += jacobian.kernel_principal_angle(a, w) < 1e-6
            lam = rng.standard_normal(a.L)
            scale_ok += jacobian.scaling_identity_check(a, w, lam) < 1e-9
    _check(results, "jacobian.kernel_dimension", kd_ok == total, f"{kd_ok}/{total}")
    _check(results, "jacobian.rank_equals_dim", rank_ok == total, f"{rank_ok}/{total}")
    _check(results, "jacobian.claimed_basis_annihilated", basis_ok == total, f"{basis_ok}/{total}")
    _check(results, "jacobian.kernel_span_angle", angle_ok == total, f"{angle_ok}/{total}")
    _check(results, "jacobian.scaling_identity", scale_ok == total, f"{scale_ok}/{total}")
    return results


def verify_fibers(seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    results = []
    archs = _default_archs()
    trials = ok = rejected = preserved = 0
    for _ in range(100):
        a = archs[int(rng.integers(len(archs)))]
        filters = []
        for ki in a.k:
            f = [int(z) for z in rng.integers(1, 5, ki)]
            lead = int(rng.integers(0, ki))
            for j in range(lead):
                f[j] = 0
            if all(v == 0 for v in f):
                f[-1] = 1
            filters.append(f)
        w = network.WeightTuple(filters)
        shifts = fibers.admissible_shifts(a, fibers.zero_profile(w))
        trials += 1
        good = all(fibers.same_function(a, w, fibers.apply_shift(a, w, t), mode="exact")
                   for t in shifts)
        preserved += good
        bad = [t for t in _candidate_shifts(a, w) if t not in shifts]
        okrej = True
        for t in bad[:3]:
            try:
                fibers.apply_shift(a, w, t)
                okrej = False
            except NeurocnnError:
                pass
        rejected += okrej
        ok += good and okrej
    _check(results, "fibers.shift_preserves_function", preserved == trials,
           f"{preserved}/{trials} exact")
    _check(results, "fibers.inadmissible_rejected", rejected == trials,
           f"{rejected}/{trials}")

    orbit_ok = 0
    toy = archs[0]
    for _ in range(50):
        w = network.WeightTuple([rng.standard_normal(ki) for ki in toy.k])
        lam = np.exp(rng.standard_normal(toy.L))
        wl = network.WeightTuple([li * np.asarray(f) for li, f in zip(lam, w.filters)])
        ca, cb = fibers.canonical_form(toy, w), fibers.canonical_form(toy, wl)
        pi = float(np.prod(lam ** np.array(network.layer_degrees(toy))))
        same = all(np.allclose(x, y, atol=1e-12)
                   for x, y in zip(ca.weights.filters, cb.weights.filters))
        ratio_ok = abs(cb.global_factor / ca.global_factor - pi) < 1e-9 * pi
        orbit_ok += same and ratio_ok
    _check(results, "fibers.canonical_collapses_scaling_orbit", orbit_ok == 50,
           f"{orbit_ok}/50")
    return results


def _candidate_shifts(arch, w):
    """A few shift vectors that violate the stride arithmetic or padding."""
    out = []
    prof = fibers.zero_profile(w)
    for i in range(arch.L):
        t = [0] * arch.L
        t[i] = prof[i][0] + 1  # exceeds available leading zeros
        out.append(tuple(t))
    if arch.L > 1 and arch.s[0] > 1 and prof[0][0] >= 1:
        t = [0] * arch.L
        t[0] = 1  # leading shift not divisible by the stride
        out.append(tuple(t))
    return out


def verify_regression(seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    results = []
    archs = _default_archs()[:4]
    ok = total = 0
    contain_ok = 0
    const_ok = 0
    for a in archs:
        n = regression.default_dataset_size(a)
        for ds_seed in range(2):
            data = regression.generate_dataset(a, n, seed=int(rng.integers(2**31)))
            ds = regression.design_system(data, a)
            sub = regression.conv_subspace(a)
            consts = []
            for _ in range(10):
                w = network.WeightTuple([rng.standard_normal(ki) for ki in a.k])
                lv = regression.loss(a, w, data)
                d2, cst = regression.loss_as_distance(a, w, data, system=ds)
                total += 1
                ok += abs(lv - (d2 + cst)) <= 1e-8 * max(lv, 1.0)
                consts.append(cst)
                m = network.sym_stack(a, network.symbolic_network(a, w)).astype(float)
                contain_ok += sub.containment_residual(m) < 1e-9
            const_ok += (max(consts) - min(consts)) <= 1e-8 * max(abs(consts[0]), 1.0)
            const_ok += abs(consts[0] - ds.lstsq_residual()) <= 1e-8 * max(consts[0], 1.0)
    _check(results, "regression.loss_equals_distance_plus_constant", ok == total,
           f"{ok}/{total}")
    _check(results, "regression.constant_is_lstsq_residual",
           const_ok == 2 * len(archs) * 2, f"{const_ok}/{2 * len(archs) * 2}")
    _check(results, "regression.network_inside_conv_subspace", contain_ok == total,
           f"{contain_ok}/{total}")

    rank_ok = 0
    a = archs[0]
    n = regression.default_dataset_size(a)
    for i in range(20):
        data = regression.generate_dataset(a, n, seed=1000 + i)
        rank_ok += regression.design_system(data, a).full_rank
    _check(results, "regression.generic_design_full_rank", rank_ok == 20, f"{rank_ok}/20")
    return results


def verify_invariants(seed: int, inject_fault: bool = False) -> list[dict]:
    results = []
    grid = invariants.ged_depth2_grid()
    if inject_fault:
        grid[1][0] += 1  # harness sanity canary: must be reported as a failure
    _check(results, "invariants.depth2_grid_reference",
           grid == [list(row) for row in DEPTH2_GED_KNOWN],
           "30 exact values" if not inject_fault else "fault injected")
    rng = np.random.default_rng(seed)
    ok = total = 0
    for _ in range(50):
        L = int(rng.integers(1, 5))
        k = [int(rng.integers(2, 6)) for _ in range(L)]
        r = int(rng.integers(2, 6))
        from .conv import architecture_for_output
        a = architecture_for_output(k, [1] * L, r)
        total += 1
        ged = invariants.ged_neuromanifold(a)  # asserts both routes agree
        ok += ged >= invariants.neuromanifold_degree(a)
    _check(results, "invariants.ged_bounds_degree", ok == total, f"{ok}/{total}")
    return results


SUITES = {
    "conv": lambda args, seed: verify_conv(seed),
    "jacobian": lambda args, seed: verify_jacobian(
        seed, parse_arch(args.arch) if args.arch else None),
    "fibers": lambda args, seed: verify_fibers(seed),
    "regression": lambda args, seed: verify_regression(seed),
    "invariants": lambda args, seed: verify_invariants(seed, args.inject_fault),
}


def cmd_verify(args) -> int:
    seed = default_seed(args.seed)
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = []
    for name in names:
        results.extend(SUITES[name](args, seed))
    failures = sum(1 for r in results if r["status"] == "fail")
    for r in results:
        print(f"{r['status'].upper():7s} {r['name']}  {r['detail']}")
    emit_json({"results": results, "failures": failures}, "verify", args.arch,
              {"seed": seed}, out=args.out)
    if failures:
        raise PropertyError(f"{failures} verification check(s) failed")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="neurocnn", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("invariants", help="dimension, degree and gED of an architecture")
    p.add_argument("--arch", required=True)
    p.add_argument("--formula-only", action="store_true",
                   help="evaluate only the gED formula (defined for any r >= 1)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_invariants)

    p = sub.add_parser("table1", help="gED grid for two-layer equal-filter networks, CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("verify", help="run property suites")
    p.add_argument("suite", choices=sorted(SUITES) + ["all"])
    p.add_argument("--seed", type=int)
    p.add_argument("--arch")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("census", help="stationary-point census of the regression loss")
    p.add_argument("--arch", required=True)
    p.add_argument("--starts", type=int, default=500)
    p.add_argument("--seed", type=int)
    p.add_argument("--dataset", help="JSON-lines dataset file")
    p.add_argument("--gen-seed", type=int, help="seed for synthetic data")
    p.add_argument("--n", type=int, help="synthetic dataset size")
    p.add_argument("--mode", choices=["generic", "teacher"], default="generic")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_census)

    p = sub.add_parser("gen-dataset", help="write a synthetic dataset as JSON lines")
    p.add_argument("--arch", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--mode", choices=["generic", "teacher"], default="generic")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("toy", help="full pipeline on the smallest two-layer quadratic net")
    p.add_argument("--starts", type=int, default=400)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_toy)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NeurocnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
