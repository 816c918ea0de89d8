"""Regular LDPC codes: construction, alist I/O, systematic encoding, sum-product decoding."""

from __future__ import annotations

import hashlib
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import CodeConstructionError

LDPC_BASE_SEED = 1962
LDPC_CANDIDATES = 100


# ---------------------------------------------------------------- construction

def gallager_matrix(n: int, wc: int, wr: int, rng: np.random.Generator) -> np.ndarray:
    """Gallager's banded construction: ``wc`` stacked bands, each a column permutation of the first."""
    if n % wr:
        raise ValueError(f"n={n} must be a multiple of the row weight {wr}")
    rows = n // wr
    band = np.zeros((rows, n), dtype=np.uint8)
    for r in range(rows):
        band[r, r * wr:(r + 1) * wr] = 1
    bands = [band] + [band[:, rng.permutation(n)] for _ in range(wc - 1)]
    return np.vstack(bands)


def socket_matrix(n: int, wc: int, wr: int, rng: np.random.Generator, tries: int = 1000) -> np.ndarray:
    """Random (wc, wr)-regular matrix by socket matching, rejecting parallel edges."""
    if (n * wc) % wr:
        raise ValueError("n * wc must be divisible by wr")
    m = n * wc // wr
    var_sockets = np.repeat(np.arange(n), wc)
    for _ in range(tries):
        chk_sockets = rng.permutation(np.repeat(np.arange(m), wr))
        H = np.zeros((m, n), dtype=np.uint8)
        np.add.at(H, (chk_sockets, var_sockets), 1)
        if H.max() == 1:
            return H
    raise CodeConstructionError(f"no simple ({wc},{wr}) graph found for n={n}")


def count_4cycles(H) -> int:
    """Number of length-4 cycles in the Tanner graph of ``H``."""
    H = np.asarray(H, dtype=np.int64)
    overlap = H.T @ H
    iu = np.triu_indices(overlap.shape[0], k=1)
    o = overlap[iu]
    return int(np.sum(o * (o - 1) // 2))


def search_parity_matrix(n, wc=3, wr=6, seed=LDPC_BASE_SEED, candidates=LDPC_CANDIDATES):
    """Lowest-4-cycle matrix among ``candidates`` seeded constructions (ties: earliest seed)."""
    best, best_cycles = None, None
    for s in range(candidates):
        rng = np.random.default_rng([seed, n, s])
        H = gallager_matrix(n, wc, wr, rng) if n % wr == 0 else socket_matrix(n, wc, wr, rng)
        cycles = count_4cycles(H)
        if best_cycles is None or cycles < best_cycles:
            best, best_cycles = H, cycles
    return best


def gf2_rref(A):
    """Reduced row echelon form over GF(2). Returns (R, pivot_columns)."""
    R = np.array(A, dtype=np.uint8) & 1
    rows, cols = R.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hits = np.flatnonzero(R[r:, c])
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            R[[r, p]] = R[[p, r]]
        others = np.flatnonzero(R[:, c])
        others = others[others != r]
        R[others] ^= R[r]
        pivots.append(c)
        r += 1
    return R[:r], np.array(pivots, dtype=int)


# ---------------------------------------------------------------- alist

def write_alist(H, path=None) -> str:
    H = np.asarray(H, dtype=np.uint8)
    m, n = H.shape
    col_w = H.sum(axis=0)
    row_w = H.sum(axis=1)
    lines = [f"{n} {m}", f"{col_w.max()} {row_w.max()}",
             " ".join(map(str, col_w)), " ".join(map(str, row_w))]
    for j in range(n):
        idx = list(np.flatnonzero(H[:, j]) + 1) + [0] * (col_w.max() - col_w[j])
        lines.append(" ".join(map(str, idx)))
    for i in range(m):
        idx = list(np.flatnonzero(H[i]) + 1) + [0] * (row_w.max() - row_w[i])
        lines.append(" ".join(map(str, idx)))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_alist(text: str) -> np.ndarray:
    tokens = [line.split() for line in text.strip().splitlines()]
    n, m = int(tokens[0][0]), int(tokens[0][1])
    H = np.zeros((m, n), dtype=np.uint8)
    for j in range(n):
        for idx in tokens[4 + j]:
            if int(idx):
                H[int(idx) - 1, j] = 1
    # the row section must agree with the column section
    for i in range(m):
        listed = sorted(int(x) - 1 for x in tokens[4 + n + i] if int(x))
        if listed != list(np.flatnonzero(H[i])):
            raise ValueError(f"alist row {i + 1} disagrees with column lists")
    return H


def read_alist(path) -> np.ndarray:
    return parse_alist(Path(path).read_text())


# ---------------------------------------------------------------- code

class LDPCCode:
    """Binary LDPC code with a systematic encoder and a batched sum-product decoder.

    The parity matrix may be rank deficient (Gallager matrices always are), in
    which case the code has more free positions than ``n_data``; the surplus
    free positions are fixed to zero.
    """

    def __init__(self, H, n_data: int):
        H = np.asarray(H, dtype=np.uint8)
        self.H = H
        self.m, self.n = H.shape
        R, pivots = gf2_rref(H)
        free = np.setdiff1d(np.arange(self.n), pivots)
        if free.size < n_data:
            raise CodeConstructionError(
                f"parity matrix of rank {pivots.size} leaves {free.size} < {n_data} free positions")
        self.n_data = n_data
        self.rank = pivots.size
        self.parity_positions = pivots
        self.data_positions = free[:n_data]
        self.frozen_positions = free[n_data:]
        self._parity_map = R[:, self.data_positions]  # rank x n_data
        self._build_graph()

    @property
    def rate(self) -> float:
        return self.n_data / self.n

    def digest(self) -> str:
        return hashlib.sha256(write_alist(self.H).encode()).hexdigest()

    def _build_graph(self):
        chk, var = np.nonzero(self.H)  # row-major: edges grouped by check
        self.n_edges = E = chk.size
        self.edge_var = var
        dc = np.bincount(chk, minlength=self.m)
        dv = np.bincount(var, minlength=self.n)
        # check view, padded with the sentinel edge index E
        self.check_edges = np.full((self.m, dc.max()), E)
        self.check_vars = np.full((self.m, dc.max()), self.n)
        slot = np.arange(E) - np.repeat(np.cumsum(dc) - dc, dc)
        self.check_edges[chk, slot] = np.arange(E)
        self.check_vars[chk, slot] = var
        self._check_mask = self.check_edges < E
        self._check_order = self.check_edges[self._check_mask]
        # variable view
        order = np.argsort(var, kind="stable")
        self.var_edges = np.full((self.n, dv.max()), E)
        vslot = np.arange(E) - np.repeat(np.cumsum(dv) - dv, dv)
        self.var_edges[var[order], vslot] = order

    def encode(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=np.uint8)
        single = data.ndim == 1
        data = np.atleast_2d(data)
        if data.shape[1] != self.n_data:
            raise ValueError(f"expected {self.n_data} data bits, got {data.shape[1]}")
        c = np.zeros((data.shape[0], self.n), dtype=np.uint8)
        c[:, self.data_positions] = data
        c[:, self.parity_positions] = (data.astype(np.int64) @ self._parity_map.T.astype(np.int64)) & 1
        return c[0] if single else c

    def extract_data(self, codeword) -> np.ndarray:
        return np.asarray(codeword)[..., self.data_positions]

    def syndrome(self, bits) -> np.ndarray:
        bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
        ext = np.concatenate([bits, np.zeros((bits.shape[0], 1), np.uint8)], axis=1)
        return ext[:, self.check_vars].sum(axis=2) & 1

    def is_codeword(self, bits):
        ok = ~self.syndrome(bits).any(axis=1)
        return bool(ok[0]) if np.asarray(bits).ndim == 1 else ok

    def decode(self, llr, max_iters: int = 50, clip: float = 30.0, return_iters: bool = False):
        """Flooding sum-product decoding of prior LLRs (ln p0/p1).

        Runs at least one iteration, then stops each row as soon as its hard
        decision satisfies every check. Rows are independent, so decoding a
        batch equals decoding its rows one by one.
        """
        llr = np.asarray(llr, dtype=float)
        single = llr.ndim == 1
        llr = np.atleast_2d(llr)
        B, E = llr.shape[0], self.n_edges
        post = np.empty_like(llr)
        used = np.full(B, max_iters)
        rows = np.arange(B)
        lin = llr
        v2c = lin[:, self.edge_var]
        lim = np.tanh(clip / 2.0)
        total = lin
        for it in range(1, max_iters + 1):
            b = rows.size
            t = np.concatenate([np.tanh(0.5 * v2c), np.ones((b, 1))], axis=1)[:, self.check_edges]
            pre = np.cumprod(np.concatenate([np.ones((b, self.m, 1)), t[:, :, :-1]], axis=2), axis=2)
            suf = np.cumprod(np.concatenate([np.ones((b, self.m, 1)), t[:, :, :0:-1]], axis=2), axis=2)[:, :, ::-1]
            excl = np.clip(pre * suf, -lim, lim)
            c2v = np.empty((b, E))
            c2v[:, self._check_order] = 2.0 * np.arctanh(excl[:, self._check_mask])
            c2v_ext = np.concatenate([c2v, np.zeros((b, 1))], axis=1)
            total = lin + c2v_ext[:, self.var_edges].sum(axis=2)
            done = ~self.syndrome(total < 0).any(axis=1)
            if done.any():
                post[rows[done]] = total[done]
                used[rows[done]] = it
                keep = ~done
                rows, lin, total, c2v = rows[keep], lin[keep], total[keep], c2v[keep]
                if rows.size == 0:
                    break
            v2c = total[:, self.edge_var] - c2v
        if rows.size:
            post[rows] = total
        post = np.clip(post, -clip, clip)
        if single:
            post, used = post[0], used[0]
        return (post, used) if return_iters else post


def _data_file(n, k):
    return resources.files("grantfree") / "data" / f"ldpc_{n}_{k}.alist"


@lru_cache(maxsize=None)
def get_code(n_coded: int, n_data: int, wc: int = 3, wr: int = 6) -> LDPCCode:
    """The project's (wc, wr)-regular code of length ``n_coded``.

    Shipped alist files take precedence; other lengths are regenerated with the
    same seeded search, so every run sees the same matrix.
    """
    path = _data_file(n_coded, n_data)
    if wc == 3 and wr == 6 and path.is_file():
        H = parse_alist(path.read_text())
    else:
        H = search_parity_matrix(n_coded, wc, wr)
    return LDPCCode(H, n_data)
