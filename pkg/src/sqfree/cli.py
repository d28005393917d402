"""Command-line front end.

Subcommands: certify, not-squarefull, verify, scan-twists, lattice, lp,
rmt (gap-prob / max-gap / prime-model / factorization), theta.

Exit codes: 0 conclusive, 2 budget-exhausted partial result, 1 usage error.
Every artifact file carries a header with the tool version, a config hash
and (where applicable) the GRH-conditional flag.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .certify import (
    Certificate,
    PartialReport,
    PipelineConfig,
    certify_squarefree,
    prove_not_squarefull,
    verify_certificate,
)
from .exceptions import BudgetError, DataError
from .intcore import CharacterDescriptor
from .testfns import (
    TestFunctionSpec,
    bessel_spec,
    g_alpha_spec,
    sinc_power_spec,
    triangle_spec,
)
from .twistsearch import SearchConfig, SearchStage, default_lineup_primes, staged_search


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_n(text: str) -> int:
    n = int(text.replace("_", ""))
    if n <= 0:
        raise ValueError("N must be positive")
    return n


def _spec_from_args(args) -> TestFunctionSpec | None:
    if args.family is None and args.X is None:
        return None
    if args.family is None or args.X is None:
        raise ValueError("--family and --X go together")
    fam = args.family
    if fam == "triangle":
        return triangle_spec(args.X)
    if fam == "g_alpha":
        return g_alpha_spec(args.X)
    if fam == "sinc_power":
        return sinc_power_spec(args.X, args.k or 1)
    if fam == "bessel_nuX":
        return bessel_spec(args.X, args.nu or 1.0)
    raise ValueError(f"family {fam!r} not constructible from the command line")


def _write_json(path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def cmd_certify(args) -> int:
    try:
        N = _parse_n(args.N)
        spec = _spec_from_args(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    cfg = PipelineConfig(
        fixed_spec=spec, fixed_q=args.q,
        prime_budget=args.prime_budget,
        max_rounds=args.max_rounds,
        use_lp=args.use_lp, use_lattice=args.use_lattice,
        slack=args.slack, workers=args.threads, seed=args.seed,
        assume_factor_checked_to=args.assume_checked,
        theoretical=args.theoretical,
        trace_path=args.trace,
    )
    mode = args.mode
    try:
        out = (certify_squarefree(N, cfg) if mode == "squarefree"
               else prove_not_squarefull(N, cfg))
    except (ValueError, BudgetError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if isinstance(out, PartialReport):
        payload = {
            "meta": _meta(cfg.hash(), grh=True),
            "partial": {
                "N": str(out.N),
                "best_lower_bound": (None if out.best_report is None
                                     else out.best_report.lower_bound),
                "factor_checked_to": str(out.factor_checked_to),
                "reason": out.reason,
            },
        }
        _write_json(args.out, payload)
        print(f"partial: best bound "
              f"{payload['partial']['best_lower_bound']}, no conclusion")
        return 2
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(out.to_json() + "\n")
    L = out.bound_report.lower_bound if out.bound_report else None
    print(f"{out.conclusion}: N={N}"
          + (f" lower_bound={L:.6f}" if L is not None else "")
          + (f" square_factor={out.square_factor}" if out.square_factor else "")
          + f" grh_conditional={out.grh_conditional}")
    return 0


def cmd_verify(args) -> int:
    try:
        with open(args.certificate, "r", encoding="utf-8") as fh:
            cert = Certificate.from_json(fh.read())
    except (OSError, ValueError, KeyError) as e:
        print(f"error: unreadable certificate: {e}", file=sys.stderr)
        return 1
    try:
        ok = verify_certificate(cert, budget=args.budget, workers=args.threads)
    except BudgetError as e:
        print(f"inconclusive: {e}")
        return 2
    print("valid" if ok else "INVALID")
    return 0 if ok else 1


def cmd_scan_twists(args) -> int:
    try:
        N = _parse_n(args.N)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    n_odd = N // 2 if N % 2 == 0 else N
    d = n_odd if n_odd % 4 == 1 else -n_odd
    char = CharacterDescriptor(d)
    xs = [args.short_x * (1.3 ** i) for i in range(args.stages)]
    keeps = [max(args.keep ** (i + 1), 1e-4) for i in range(args.stages)]
    cfg = SearchConfig(
        q_max=args.qmax,
        stages=tuple(SearchStage(x, k) for x, k in zip(xs, keeps)),
        lineup_primes=default_lineup_primes(d, args.lineup),
        checkpoint_path=args.checkpoint,
    )
    try:
        ranked = staged_search(char, cfg)
    except KeyboardInterrupt:
        print("interrupted; checkpoint retained", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(f"# sqfree {__version__} scan-twists config={cfg.hash()} "
                 f"grh_conditional=true\n")
        fh.write("rank,q,score,stage_reached\n")
        for i, c in enumerate(ranked):
            fh.write(f"{i},{c.q},{c.score!r},{c.stage_reached}\n")
    print(f"wrote {len(ranked)} candidates to {args.out}")
    return 0


def cmd_lattice(args) -> int:
    from .lattice import basis_to_text, build_twist_lattice, extract_characters, \
        lll_reduce
    try:
        N = _parse_n(args.N)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    n_odd = N // 2 if N % 2 == 0 else N
    d = n_odd if n_odd % 4 == 1 else -n_odd
    char = CharacterDescriptor(d)
    basis = build_twist_lattice(char, args.P, args.Q, args.mscale)
    reduced = lll_reduce(basis)
    cands = extract_characters(reduced, basis, max_results=args.max_results)
    if args.basis_out:
        with open(args.basis_out, "w", encoding="utf-8") as fh:
            fh.write(basis_to_text(reduced))
    _write_json(args.out, {
        "meta": _meta(f"P={args.P},Q={args.Q},M={args.mscale}", grh=False),
        "candidates": [
            {"q": str(c.q), "selected": list(c.selected),
             "norm_sq": str(c.norm_sq), "objective": c.objective}
            for c in cands],
    })
    print(f"extracted {len(cands)} candidate twists")
    return 0


def cmd_lp(args) -> int:
    from .lpsolve import build_lp_system, export_lp, solve_lp
    try:
        N = _parse_n(args.N)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    n_odd = N // 2 if N % 2 == 0 else N
    d = n_odd if n_odd % 4 == 1 else -n_odd
    char = CharacterDescriptor(d)
    specs = [sinc_power_spec(args.X, k) for k in range(1, args.kmax + 1)]
    dirs = [(True, k > 1) for k in range(1, args.kmax + 1)]
    system = build_lp_system(char, args.q, specs, T=args.T, V=args.V,
                             integer_bin_count=args.int_bins,
                             bound_directions=dirs,
                             prime_budget=args.prime_budget,
                             workers=args.threads)
    if args.export:
        with open(args.export, "w", encoding="utf-8") as fh:
            fh.write(export_lp(system))
    sol = solve_lp(system, node_budget=args.node_budget)
    _write_json(args.out, {"meta": _meta("lp", grh=True),
                           **json.loads(sol.to_json())})
    print(f"status={sol.status} logd_lower={sol.logd_lower}")
    return 0 if sol.status == "optimal" else 2


def cmd_rmt(args) -> int:
    from .rmt import (
        emit_gap_csv,
        factorization_identity_check,
        gap_probability_curve,
        max_gap_statistic,
        random_prime_model_multi,
    )
    rng = np.random.default_rng(args.seed)
    if args.rmt_cmd == "gap-prob":
        ss = [args.s] if args.s is not None else list(
            np.linspace(args.s_min, args.s_max, args.s_points))
        rows = gap_probability_curve(args.ensemble, args.N, ss, args.samples, rng)
        emit_gap_csv(args.out, rows, args.seed)
        for r in rows:
            print(f"s={r.s:.6f} estimate={r.estimate:.6f} stderr={r.stderr:.2e}")
        return 0
    if args.rmt_cmd == "max-gap":
        stats = max_gap_statistic(args.ensemble, args.N, args.beta,
                                  args.trials, rng, M_cap=args.m_cap)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(f"# sqfree {__version__} seed={args.seed} "
                     f"ensemble={args.ensemble} N={args.N} beta={args.beta}\n")
            fh.write("trial,normalized_max\n")
            for i, v in enumerate(stats):
                fh.write(f"{i},{float(v)!r}\n")
        print(f"mean={np.mean(stats):.4f} std={np.std(stats):.4f}")
        return 0
    if args.rmt_cmd == "prime-model":
        reports = random_prime_model_multi(args.X, args.n, args.samples, rng)
        payload = [r.__dict__ for r in reports]
        _write_json(args.out, {"meta": _meta(f"seed={args.seed}", grh=False),
                               "reports": payload})
        for r in reports:
            print(f"n={r.n} P(Y>=v)={r.p_v:.6f} (bound {r.bound_v:.3e}, "
                  f"ok={r.lower_ok}) P(Y>=u)={r.p_u:.2e} (bound {r.bound_u:.3e}, "
                  f"ok={r.upper_ok})")
        return 0
    if args.rmt_cmd == "factorization":
        rep = factorization_identity_check(args.N, args.s, args.samples, rng)
        print(f"U={rep.p_u.estimate:.6f} SOxUSp="
              f"{rep.p_so.estimate * rep.p_usp.estimate:.6f} "
              f"4sigma={4 * rep.combined_sigma:.2e} passed={rep.passed}")
        return 0 if rep.passed else 2
    return 1


def cmd_theta(args) -> int:
    from .bounds import theta_scan
    try:
        N = _parse_n(args.N)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    d = N if N % 4 == 1 else (-N if (-N) % 4 == 1 else N)
    if d % 4 not in (0, 1):
        print("error: neither +-N is a discriminant", file=sys.stderr)
        return 1
    char = CharacterDescriptor(d)
    grid = float(abs(d)) ** (np.arange(0, args.points + 1) / args.points)
    res = theta_scan(char, grid, terms_budget=args.terms_budget)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(f"# sqfree {__version__} theta d={d} non-certifying heuristic\n")
        fh.write("x,S\n")
        for x, v in zip(grid, res.values):
            fh.write(f"{x!r},{v!r}\n")
    if res.square_factor:
        print(f"square factor {res.square_factor}")
    else:
        print(f"symmetry estimate: {res.symmetry_estimate}")
    return 0


def _meta(config_hash: str, grh: bool) -> dict:
    return {"tool_version": __version__, "config": config_hash,
            "grh_conditional": grh}


def build_parser() -> _Parser:
    p = _Parser(prog="sqfree", description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    sub = p.add_subparsers(dest="cmd", required=True)

    def add_certify(name, mode):
        c = sub.add_parser(name)
        c.add_argument("N")
        c.add_argument("--mode", default=mode,
                       choices=["squarefree", "not-squarefull"])
        c.add_argument("--X", type=float)
        c.add_argument("--family", choices=["triangle", "g_alpha",
                                            "sinc_power", "bessel_nuX"])
        c.add_argument("--k", type=int)
        c.add_argument("--nu", type=float)
        c.add_argument("--q", type=int)
        c.add_argument("--prime-budget", type=int, default=1 << 34)
        c.add_argument("--max-rounds", type=int, default=20)
        c.add_argument("--use-lp", action="store_true")
        c.add_argument("--use-lattice", action="store_true")
        c.add_argument("--slack", type=float, default=1e-3)
        c.add_argument("--assume-checked", type=int, default=1)
        c.add_argument("--theoretical", action="store_true")
        c.add_argument("--trace")
        c.add_argument("--out", default="certificate.json")
        c.set_defaults(func=cmd_certify)

    add_certify("certify", "squarefree")
    add_certify("not-squarefull", "not-squarefull")

    v = sub.add_parser("verify")
    v.add_argument("certificate")
    v.add_argument("--budget", type=int, default=5_000_000)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("scan-twists")
    s.add_argument("N")
    s.add_argument("--qmax", type=int, required=True)
    s.add_argument("--stages", type=int, default=1)
    s.add_argument("--keep", type=float, default=0.01)
    s.add_argument("--short-x", type=float, default=math.log(1e4))
    s.add_argument("--lineup", type=int, default=3)
    s.add_argument("--checkpoint")
    s.add_argument("--out", default="twists.csv")
    s.set_defaults(func=cmd_scan_twists)

    la = sub.add_parser("lattice")
    la.add_argument("N")
    la.add_argument("--P", type=int, default=50)
    la.add_argument("--Q", type=int, default=50)
    la.add_argument("--mscale", type=int, default=96)
    la.add_argument("--max-results", type=int, default=10)
    la.add_argument("--basis-out")
    la.add_argument("--out", default="lattice.json")
    la.set_defaults(func=cmd_lattice)

    lp = sub.add_parser("lp")
    lp.add_argument("N")
    lp.add_argument("--q", type=int, default=1)
    lp.add_argument("--T", type=float, default=4.0)
    lp.add_argument("--V", type=int, default=100)
    lp.add_argument("--int-bins", type=int, default=20)
    lp.add_argument("--X", type=float, default=math.log(1e4))
    lp.add_argument("--kmax", type=int, default=4)
    lp.add_argument("--node-budget", type=int, default=100_000)
    lp.add_argument("--prime-budget", type=int, default=1 << 34)
    lp.add_argument("--export")
    lp.add_argument("--out", default="lp_solution.json")
    lp.set_defaults(func=cmd_lp)

    r = sub.add_parser("rmt")
    rsub = r.add_subparsers(dest="rmt_cmd", required=True)
    g = rsub.add_parser("gap-prob")
    g.add_argument("--ensemble", choices=["USp", "U", "SO"], required=True)
    g.add_argument("--N", type=int, required=True)
    g.add_argument("--s", type=float)
    g.add_argument("--s-min", type=float, default=0.1)
    g.add_argument("--s-max", type=float, default=3.0)
    g.add_argument("--s-points", type=int, default=20)
    g.add_argument("--samples", type=int, required=True)
    g.add_argument("--out", default="gap_prob.csv")
    g.set_defaults(func=cmd_rmt)
    mg = rsub.add_parser("max-gap")
    mg.add_argument("--ensemble", choices=["USp", "U"], required=True)
    mg.add_argument("--N", type=int, required=True)
    mg.add_argument("--beta", type=float, default=1.0)
    mg.add_argument("--trials", type=int, default=30)
    mg.add_argument("--m-cap", type=int, default=1_000_000)
    mg.add_argument("--out", default="max_gap.csv")
    mg.set_defaults(func=cmd_rmt)
    pm = rsub.add_parser("prime-model")
    pm.add_argument("--X", type=float, default=math.log(1e4))
    pm.add_argument("--n", type=int, nargs="+", default=[20, 50, 100])
    pm.add_argument("--samples", type=int, default=1_000_000)
    pm.add_argument("--out", default="prime_model.json")
    pm.set_defaults(func=cmd_rmt)
    fc = rsub.add_parser("factorization")
    fc.add_argument("--N", type=int, default=1)
    fc.add_argument("--s", type=float, default=math.pi / 3)
    fc.add_argument("--samples", type=int, default=1_000_000)
    fc.set_defaults(func=cmd_rmt)

    t = sub.add_parser("theta")
    t.add_argument("N")
    t.add_argument("--points", type=int, default=24)
    t.add_argument("--terms-budget", type=int, default=50_000_000)
    t.add_argument("--out", default="theta.csv")
    t.set_defaults(func=cmd_theta)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
