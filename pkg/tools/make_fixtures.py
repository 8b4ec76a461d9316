#!/usr/bin/env python3
"""Generate the FCIDUMP fixtures shipped under fixtures/.

Self-contained: computes s/p Gaussian integrals (McMurchie-Davidson),
runs RHF with DIIS, transforms to the MO basis, and writes FCIDUMP files
plus fixtures/reference.json with independently computed reference
energies (RHF, full CI, and CASCI in selected active spaces).

The CI reference values are obtained by applying the second-quantized
Hamiltonian directly to occupation-number vectors, so they share no code
with the library under test.  This script is a development tool; the
library itself never imports it and only consumes the generated files.

Run from the repository root:

    python3 tools/make_fixtures.py
"""

import itertools
import json
import math
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.special import hyp1f1

ANGSTROM_TO_BOHR = 1.0 / 0.529177210903

# ---------------------------------------------------------------------------
# Basis set data (exponents, contraction coefficients for normalized
# primitives).  Standard published STO-nG / 6-31G parameters.
# ---------------------------------------------------------------------------

BASIS = {
    ("H", "sto-3g"): [
        ("s", [(3.42525091, 0.15432897), (0.62391373, 0.53532814), (0.16885540, 0.44463454)]),
    ],
    ("H", "sto-6g"): [
        ("s", [(35.52322122, 0.00916359628), (6.513143725, 0.04936149294),
               (1.822142904, 0.16853830490), (0.625955266, 0.37056279970),
               (0.243076747, 0.41649152980), (0.100112428, 0.13033408410)]),
    ],
    ("H", "6-31g"): [
        ("s", [(18.7311370, 0.03349460), (2.8253937, 0.23472695), (0.6401217, 0.81375733)]),
        ("s", [(0.1612778, 1.0)]),
    ],
    ("O", "sto-3g"): [
        ("s", [(130.7093200, 0.15432897), (23.8088610, 0.53532814), (6.4436083, 0.44463454)]),
        ("s", [(5.0331513, -0.09996723), (1.1695961, 0.39951283), (0.3803890, 0.70011547)]),
        ("p", [(5.0331513, 0.15591627), (1.1695961, 0.60768372), (0.3803890, 0.39195739)]),
    ],
}

NUCLEAR_CHARGE = {"H": 1, "O": 8}


def double_factorial(n):
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def primitive_norm(alpha, lmn):
    l, m, n = lmn
    L = l + m + n
    pref = (2.0 * alpha / math.pi) ** 0.75 * (4.0 * alpha) ** (L / 2.0)
    denom = math.sqrt(double_factorial(2 * l - 1) * double_factorial(2 * m - 1)
                      * double_factorial(2 * n - 1))
    return pref / denom


class Cgf:
    """Contracted Cartesian Gaussian: fixed angular component on one center."""

    def __init__(self, center, lmn, prims):
        self.center = np.asarray(center, dtype=float)
        self.lmn = lmn
        self.alphas = np.array([a for a, _ in prims])
        coeffs = np.array([c * primitive_norm(a, lmn) for a, c in prims])
        # Normalize the contraction to unit self-overlap.
        s = 0.0
        for a, ca in zip(self.alphas, coeffs):
            for b, cb in zip(self.alphas, coeffs):
                s += ca * cb * _prim_overlap(a, self.center, lmn, b, self.center, lmn)
        self.coeffs = coeffs / math.sqrt(s)


def boys(n, x):
    return hyp1f1(n + 0.5, n + 1.5, -x) / (2.0 * n + 1.0)


def hermite_e(i, j, t, qx, a, b):
    """Hermite expansion coefficient E_t^{ij} (one Cartesian direction)."""
    p = a + b
    mu = a * b / p
    if t < 0 or t > i + j:
        return 0.0
    if i == j == t == 0:
        return math.exp(-mu * qx * qx)
    if j == 0:
        return (hermite_e(i - 1, j, t - 1, qx, a, b) / (2.0 * p)
                - (mu * qx / a) * hermite_e(i - 1, j, t, qx, a, b)
                + (t + 1) * hermite_e(i - 1, j, t + 1, qx, a, b))
    return (hermite_e(i, j - 1, t - 1, qx, a, b) / (2.0 * p)
            + (mu * qx / b) * hermite_e(i, j - 1, t, qx, a, b)
            + (t + 1) * hermite_e(i, j - 1, t + 1, qx, a, b))


def _prim_overlap(a, ra, lmn1, b, rb, lmn2):
    p = a + b
    s = 1.0
    for d in range(3):
        s *= hermite_e(lmn1[d], lmn2[d], 0, ra[d] - rb[d], a, b)
    return s * (math.pi / p) ** 1.5


def _prim_kinetic(a, ra, lmn1, b, rb, lmn2):
    l2, m2, n2 = lmn2

    def ov(lmn):
        if min(lmn) < 0:
            return 0.0
        return _prim_overlap(a, ra, lmn1, b, rb, lmn)

    term0 = b * (2 * (l2 + m2 + n2) + 3) * ov((l2, m2, n2))
    term1 = -2.0 * b * b * (ov((l2 + 2, m2, n2)) + ov((l2, m2 + 2, n2)) + ov((l2, m2, n2 + 2)))
    term2 = -0.5 * (l2 * (l2 - 1) * ov((l2 - 2, m2, n2))
                    + m2 * (m2 - 1) * ov((l2, m2 - 2, n2))
                    + n2 * (n2 - 1) * ov((l2, m2, n2 - 2)))
    return term0 + term1 + term2


def hermite_coulomb(t, u, v, n, p, rpc):
    """Auxiliary Hermite Coulomb integral R^n_{tuv}."""
    if t < 0 or u < 0 or v < 0:
        return 0.0
    if t == u == v == 0:
        x = p * (rpc[0] ** 2 + rpc[1] ** 2 + rpc[2] ** 2)
        return (-2.0 * p) ** n * boys(n, x)
    if t > 0:
        return ((t - 1) * hermite_coulomb(t - 2, u, v, n + 1, p, rpc)
                + rpc[0] * hermite_coulomb(t - 1, u, v, n + 1, p, rpc))
    if u > 0:
        return ((u - 1) * hermite_coulomb(t, u - 2, v, n + 1, p, rpc)
                + rpc[1] * hermite_coulomb(t, u - 1, v, n + 1, p, rpc))
    return ((v - 1) * hermite_coulomb(t, u, v - 2, n + 1, p, rpc)
            + rpc[2] * hermite_coulomb(t, u, v - 1, n + 1, p, rpc))


def _prim_nuclear(a, ra, lmn1, b, rb, lmn2, rc):
    p = a + b
    rp = (a * ra + b * rb) / p
    rpc = rp - rc
    val = 0.0
    for t in range(lmn1[0] + lmn2[0] + 1):
        et = hermite_e(lmn1[0], lmn2[0], t, ra[0] - rb[0], a, b)
        for u in range(lmn1[1] + lmn2[1] + 1):
            eu = hermite_e(lmn1[1], lmn2[1], u, ra[1] - rb[1], a, b)
            for v in range(lmn1[2] + lmn2[2] + 1):
                ev = hermite_e(lmn1[2], lmn2[2], v, ra[2] - rb[2], a, b)
                val += et * eu * ev * hermite_coulomb(t, u, v, 0, p, rpc)
    return 2.0 * math.pi / p * val


def _prim_eri(a, ra, la, b, rb, lb, c, rc, lc, d, rd, ld):
    p = a + b
    q = c + d
    alpha = p * q / (p + q)
    rp = (a * ra + b * rb) / p
    rq = (c * rc + d * rd) / q
    rpq = rp - rq

    e1 = {}
    for t in range(la[0] + lb[0] + 1):
        for u in range(la[1] + lb[1] + 1):
            for v in range(la[2] + lb[2] + 1):
                e1[(t, u, v)] = (hermite_e(la[0], lb[0], t, ra[0] - rb[0], a, b)
                                 * hermite_e(la[1], lb[1], u, ra[1] - rb[1], a, b)
                                 * hermite_e(la[2], lb[2], v, ra[2] - rb[2], a, b))
    e2 = {}
    for t in range(lc[0] + ld[0] + 1):
        for u in range(lc[1] + ld[1] + 1):
            for v in range(lc[2] + ld[2] + 1):
                e2[(t, u, v)] = (hermite_e(lc[0], ld[0], t, rc[0] - rd[0], c, d)
                                 * hermite_e(lc[1], ld[1], u, rc[1] - rd[1], c, d)
                                 * hermite_e(lc[2], ld[2], v, rc[2] - rd[2], c, d))

    val = 0.0
    for (t, u, v), w1 in e1.items():
        if w1 == 0.0:
            continue
        for (tt, uu, vv), w2 in e2.items():
            if w2 == 0.0:
                continue
            sign = -1.0 if (tt + uu + vv) % 2 else 1.0
            val += w1 * w2 * sign * hermite_coulomb(t + tt, u + uu, v + vv, 0, alpha, rpq)
    return val * 2.0 * math.pi ** 2.5 / (p * q * math.sqrt(p + q))


# ---------------------------------------------------------------------------
# Molecular integrals over contracted functions
# ---------------------------------------------------------------------------

CART = {"s": [(0, 0, 0)], "p": [(1, 0, 0), (0, 1, 0), (0, 0, 1)]}


def build_basis(atoms, basis_name):
    funcs = []
    for symbol, coord in atoms:
        for shell, prims in BASIS[(symbol, basis_name)]:
            for lmn in CART[shell]:
                funcs.append(Cgf(coord, lmn, prims))
    return funcs


def contracted(kernel, *cgfs):
    val = 0.0
    for idx in itertools.product(*[range(len(f.alphas)) for f in cgfs]):
        coeff = math.prod(f.coeffs[i] for f, i in zip(cgfs, idx))
        args = []
        for f, i in zip(cgfs, idx):
            args.extend([f.alphas[i], f.center, f.lmn])
        val += coeff * kernel(*args)
    return val


def molecular_integrals(atoms, basis_name):
    funcs = build_basis(atoms, basis_name)
    n = len(funcs)
    S = np.zeros((n, n))
    T = np.zeros((n, n))
    V = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            S[i, j] = S[j, i] = contracted(_prim_overlap, funcs[i], funcs[j])
            T[i, j] = T[j, i] = contracted(_prim_kinetic, funcs[i], funcs[j])
            v = 0.0
            for symbol, coord in atoms:
                z = NUCLEAR_CHARGE[symbol]
                v -= z * contracted(
                    lambda a, ra, l1, b, rb, l2: _prim_nuclear(a, ra, l1, b, rb, l2,
                                                               np.asarray(coord)),
                    funcs[i], funcs[j])
            V[i, j] = V[j, i] = v

    eri = np.zeros((n, n, n, n))
    for i in range(n):
        for j in range(i + 1):
            for k in range(n):
                for l in range(k + 1):
                    if (i * (i + 1) // 2 + j) < (k * (k + 1) // 2 + l):
                        continue
                    val = contracted(_prim_eri, funcs[i], funcs[j], funcs[k], funcs[l])
                    for a, b in ((i, j), (j, i)):
                        for c, d in ((k, l), (l, k)):
                            eri[a, b, c, d] = eri[c, d, a, b] = val
    return S, T + V, eri


def nuclear_repulsion(atoms):
    e = 0.0
    for (s1, r1), (s2, r2) in itertools.combinations(atoms, 2):
        e += (NUCLEAR_CHARGE[s1] * NUCLEAR_CHARGE[s2]
              / np.linalg.norm(np.asarray(r1) - np.asarray(r2)))
    return e


# ---------------------------------------------------------------------------
# RHF with DIIS
# ---------------------------------------------------------------------------

def rhf(S, hcore, eri, n_elec, e_nuc, max_iter=200, tol=1e-12):
    n = S.shape[0]
    nocc = n_elec // 2
    evals, evecs = scipy.linalg.eigh(hcore, S)
    C = evecs
    D = 2.0 * C[:, :nocc] @ C[:, :nocc].T
    errs, focks = [], []
    e_old = 0.0
    for it in range(max_iter):
        J = np.einsum("pqrs,rs->pq", eri, D)
        K = np.einsum("prqs,rs->pq", eri, D)
        F = hcore + J - 0.5 * K
        err = F @ D @ S - S @ D @ F
        errs.append(err)
        focks.append(F)
        if len(errs) > 8:
            errs.pop(0)
            focks.pop(0)
        if it > 0:
            m = len(errs)
            B = -np.ones((m + 1, m + 1))
            B[m, m] = 0.0
            for i in range(m):
                for j in range(m):
                    B[i, j] = np.sum(errs[i] * errs[j])
            rhs = np.zeros(m + 1)
            rhs[m] = -1.0
            try:
                w = np.linalg.solve(B, rhs)[:m]
                F = sum(wi * fi for wi, fi in zip(w, focks))
            except np.linalg.LinAlgError:
                pass
        evals, evecs = scipy.linalg.eigh(F, S)
        C = evecs
        D = 2.0 * C[:, :nocc] @ C[:, :nocc].T
        e_elec = 0.5 * np.sum(D * (hcore + hcore + J - 0.5 * K)) / 1.0
        e_elec = np.sum(D * hcore) + 0.5 * np.sum(D * (J - 0.5 * K))
        e_tot = e_elec + e_nuc
        if abs(e_tot - e_old) < tol and it > 3:
            return e_tot, C, evals
        e_old = e_tot
    raise RuntimeError("SCF did not converge")


def mo_transform(hcore, eri, C):
    h_mo = C.T @ hcore @ C
    g = np.einsum("pi,pqrs->iqrs", C, eri, optimize=True)
    g = np.einsum("qj,iqrs->ijrs", C, g, optimize=True)
    g = np.einsum("rk,ijrs->ijks", C, g, optimize=True)
    g = np.einsum("sl,ijks->ijkl", C, g, optimize=True)
    return h_mo, g


# ---------------------------------------------------------------------------
# Independent CI reference: apply Eq.-style second-quantized H to
# occupation-number vectors (spin orbital 2k = k-alpha, 2k+1 = k-beta).
# ---------------------------------------------------------------------------

def _apply_ann(occ, so):
    if not occ & (1 << so):
        return None, 0
    sign = -1 if bin(occ & ((1 << so) - 1)).count("1") % 2 else 1
    return occ ^ (1 << so), sign


def _apply_cre(occ, so):
    if occ & (1 << so):
        return None, 0
    sign = -1 if bin(occ & ((1 << so) - 1)).count("1") % 2 else 1
    return occ | (1 << so), sign


def ci_reference_energy(h, g, e_core, n_alpha, n_beta, core=(), active=None):
    """Lowest eigenvalue of H in a determinant basis, by brute force.

    core: spatial orbitals pinned doubly occupied; active: spatial orbitals
    whose occupations vary (defaults to all non-core).  Electron counts are
    totals including the core.
    """
    n = h.shape[0]
    if active is None:
        active = [p for p in range(n) if p not in core]
    states = []
    na_act = n_alpha - len(core)
    nb_act = n_beta - len(core)
    core_mask = 0
    for p in core:
        core_mask |= (1 << (2 * p)) | (1 << (2 * p + 1))
    for occ_a in itertools.combinations(active, na_act):
        for occ_b in itertools.combinations(active, nb_act):
            occ = core_mask
            for p in occ_a:
                occ |= 1 << (2 * p)
            for p in occ_b:
                occ |= 1 << (2 * p + 1)
            states.append(occ)
    index = {s: i for i, s in enumerate(states)}
    dim = len(states)
    H = np.zeros((dim, dim))

    spatial = sorted(set(list(core) + list(active)))
    for j, occ in enumerate(states):
        # one-body
        for p in spatial:
            for q in spatial:
                if h[p, q] == 0.0:
                    continue
                for s in (0, 1):
                    o1, s1 = _apply_ann(occ, 2 * q + s)
                    if o1 is None:
                        continue
                    o2, s2 = _apply_cre(o1, 2 * p + s)
                    if o2 is None or o2 not in index:
                        continue
                    H[index[o2], j] += h[p, q] * s1 * s2
        # two-body, 0.5 * (pq|rs) a+_ps a+_rt a_st a_qs
        for p in spatial:
            for q in spatial:
                for r in spatial:
                    for s_ in spatial:
                        val = g[p, q, r, s_]
                        if val == 0.0:
                            continue
                        for sp in (0, 1):
                            for tau in (0, 1):
                                o1, x1 = _apply_ann(occ, 2 * q + sp)
                                if o1 is None:
                                    continue
                                o2, x2 = _apply_ann(o1, 2 * s_ + tau)
                                if o2 is None:
                                    continue
                                o3, x3 = _apply_cre(o2, 2 * r + tau)
                                if o3 is None:
                                    continue
                                o4, x4 = _apply_cre(o3, 2 * p + sp)
                                if o4 is None or o4 not in index:
                                    continue
                                H[index[o4], j] += 0.5 * val * x1 * x2 * x3 * x4
    evals = np.linalg.eigvalsh(H)
    return float(evals[0] + e_core), dim


# ---------------------------------------------------------------------------
# FCIDUMP output
# ---------------------------------------------------------------------------

def write_fcidump(path, h, g, e_core, n_elec, ms2=0, tol=1e-14):
    n = h.shape[0]
    lines = [f"&FCI NORB={n:4d},NELEC={n_elec:3d},MS2={ms2:2d},"]
    lines.append("  ORBSYM=" + "1," * n)
    lines.append("  ISYM=1,")
    lines.append("&END")

    def pair_index(i, j):
        return i * (i + 1) // 2 + j

    for i in range(n):
        for j in range(i + 1):
            for k in range(i + 1):
                for l in range(k + 1):
                    if pair_index(i, j) < pair_index(k, l):
                        continue
                    v = g[i, j, k, l]
                    if abs(v) > tol:
                        lines.append(f" {v: .16E} {i+1:4d} {j+1:4d} {k+1:4d} {l+1:4d}")
    for i in range(n):
        for j in range(i + 1):
            if abs(h[i, j]) > tol:
                lines.append(f" {h[i, j]: .16E} {i+1:4d} {j+1:4d}    0    0")
    lines.append(f" {e_core: .16E}    0    0    0    0")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Fixture definitions
# ---------------------------------------------------------------------------

def h2o_geometry(r_stretch_angstrom):
    """One O-H bond stretched to r, the other fixed near equilibrium."""
    r_fix = 0.9572 * ANGSTROM_TO_BOHR
    r_var = r_stretch_angstrom * ANGSTROM_TO_BOHR
    theta = math.radians(104.52)
    o = np.zeros(3)
    h1 = np.array([r_fix, 0.0, 0.0])
    h2 = np.array([r_var * math.cos(theta), r_var * math.sin(theta), 0.0])
    return [("O", o), ("H", h1), ("H", h2)]


def h_chain(n_atoms, spacing_bohr):
    return [("H", np.array([i * spacing_bohr, 0.0, 0.0])) for i in range(n_atoms)]


def make_fixture(name, atoms, basis_name, n_elec, cas=None, out_dir=Path("fixtures")):
    print(f"--- {name} ({basis_name}, {n_elec} electrons)")
    S, hcore, eri = molecular_integrals(atoms, basis_name)
    e_nuc = nuclear_repulsion(atoms)
    e_rhf, C, mo_energies = rhf(S, hcore, eri, n_elec, e_nuc)
    h_mo, g_mo = mo_transform(hcore, eri, C)
    n = h_mo.shape[0]
    write_fcidump(out_dir / f"{name}.fcidump", h_mo, g_mo, e_nuc, n_elec)

    na = nb = n_elec // 2
    ref = {
        "basis": basis_name,
        "n_orbitals": n,
        "n_electrons": n_elec,
        "e_nuclear": e_nuc,
        "e_rhf": e_rhf,
        "mo_energies": [float(x) for x in mo_energies],
    }
    dim_full = math.comb(n, na) * math.comb(n, nb)
    if dim_full <= 1000:
        e_fci, dim = ci_reference_energy(h_mo, g_mo, e_nuc, na, nb)
        ref["e_fci"] = e_fci
        ref["fci_dimension"] = dim
        print(f"    E_RHF = {e_rhf:.10f}   E_FCI = {e_fci:.10f}  (dim {dim})")
    else:
        print(f"    E_RHF = {e_rhf:.10f}   (FCI dim {dim_full} skipped)")
    if cas is not None:
        n_core, active = cas
        e_cas, dim_cas = ci_reference_energy(
            h_mo, g_mo, e_nuc, na, nb, core=tuple(range(n_core)), active=list(active))
        ref["cas"] = {"n_core": n_core, "active_orbitals": list(active),
                      "e_casci": e_cas, "dimension": dim_cas}
        print(f"    E_CASCI({2*(na - n_core)}e,{len(active)}o) = {e_cas:.10f}  (dim {dim_cas})")
    return ref


def main():
    out = Path(__file__).resolve().parents[1] / "fixtures"
    out.mkdir(exist_ok=True)
    refs = {}

    refs["h2_sto6g_r1.40"] = make_fixture(
        "h2_sto6g_r1.40", h_chain(2, 1.40), "sto-6g", 2, out_dir=out)

    refs["h4_sto6g_r2.00"] = make_fixture(
        "h4_sto6g_r2.00", h_chain(4, 2.00), "sto-6g", 4, out_dir=out)

    for r in (2.0, 3.0, 4.0):
        name = f"h4_631g_r{r:.2f}"
        refs[name] = make_fixture(
            name, h_chain(4, r), "6-31g", 4, cas=(0, [0, 1, 2, 3]), out_dir=out)

    for r in (1.0, 2.0):
        name = f"h2o_sto3g_r{r:.2f}"
        refs[name] = make_fixture(
            name, h2o_geometry(r), "sto-3g", 10, cas=(4, [4, 5]), out_dir=out)

    with open(out / "reference.json", "w") as fh:
        json.dump(refs, fh, indent=2, sort_keys=True)
    print(f"wrote {out / 'reference.json'}")


if __name__ == "__main__":
    main()
