"""Fitted spline f(x) = sum_k c_k p_k(x) + sum_i d_i R(x, X_i) and its text document format."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .basis import as_multi_index, as_points
from .data import Dataset
from .errors import ModelFormatError, VersionMismatchError
from .kernel import SplineSetup, make_setup, r_matrix

log = logging.getLogger(__name__)

FORMAT_NAME = "smoothspline-model"
FORMAT_VERSION = "1"


@dataclass(frozen=True)
class SplineModel:
    setup: SplineSetup
    knots: np.ndarray
    c: np.ndarray
    d: np.ndarray
    lam: float
    J_value: float
    En_value: float

    @property
    def dim(self) -> int:
        return self.setup.d

    def _points(self, x) -> np.ndarray:
        X = as_points(x, self.dim)
        outside = ~self.setup.in_domain(X)
        if np.any(outside):
            log.info("%d evaluation point(s) lie outside the domain %s", int(outside.sum()), self.setup.domain)
        return X

    def evaluate(self, x) -> np.ndarray:
        X = self._points(x)
        out = self.setup.basis.evaluate(X) @ self.c
        if self.knots.shape[0]:
            out = out + r_matrix(X, self.knots, self.setup.kernel) @ self.d
        return out

    __call__ = evaluate

    def derivative(self, x, alpha) -> np.ndarray:
        alpha = as_multi_index(alpha, self.dim)
        X = self._points(x)
        out = self.setup.basis.derivative(X, alpha) @ self.c
        if self.knots.shape[0]:
            out = out + r_matrix(X, self.knots, self.setup.kernel, alpha) @ self.d
        return out

    @cached_property
    def gram(self) -> np.ndarray:
        R = r_matrix(self.knots, self.knots, self.setup.kernel)
        return 0.5 * (R + R.T)

    def j_value(self) -> float:
        val = float(self.d @ self.gram @ self.d)
        scale = float(np.abs(self.d) @ np.abs(self.gram) @ np.abs(self.d))
        if val < 0:
            if val < -1e-8 * max(scale, 1.0):
                log.warning("roughness quadratic form is negative (%.3g); kernel matrix not PSD?", val)
            return 0.0
        return val

    def e_n(self, data: Dataset) -> float:
        if data.d != self.dim:
            raise ValueError(f"data dimension {data.d} does not match model dimension {self.dim}")
        return float(np.mean((data.Y - self.evaluate(data.X)) ** 2))

    def serialize(self) -> str:
        return serialize(self)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _block(name: str, A: np.ndarray) -> list[str]:
    A = np.atleast_2d(A) if A.ndim == 2 else A.reshape(-1, 1)
    return [f"{name} {A.shape[0]}"] + [" ".join(_fmt(v) for v in row) for row in A]


def serialize(model: SplineModel) -> str:
    s = model.setup
    lines = [
        FORMAT_NAME,
        f"version {FORMAT_VERSION}",
        f"m {s.m}",
        f"d {s.d}",
        f"domain {_fmt(s.domain[0])} {_fmt(s.domain[1])}",
        f"lambda {_fmt(model.lam)}",
        f"J {_fmt(model.J_value)}",
        f"En {_fmt(model.En_value)}",
    ]
    lines += _block("anchors", s.anchors.points)
    lines += _block("knots", model.knots)
    lines += _block("c", model.c)
    lines += _block("dcoef", model.d)
    return "\n".join(lines) + "\n"


class _Reader:
    def __init__(self, text: str):
        self.lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        self.pos = 0

    def next(self, field: str) -> list[str]:
        if self.pos >= len(self.lines):
            raise ModelFormatError(f"missing field '{field}'", field)
        toks = self.lines[self.pos].split()
        self.pos += 1
        return toks

    def scalar(self, key: str, conv=float):
        toks = self.next(key)
        if toks[0] != key:
            raise ModelFormatError(f"missing field '{key}' (found '{toks[0]}')", key)
        try:
            vals = [conv(t) for t in toks[1:]]
        except ValueError as exc:
            raise ModelFormatError(f"corrupt value for field '{key}': {exc}", key) from None
        if not vals:
            raise ModelFormatError(f"field '{key}' has no value", key)
        return vals if len(vals) > 1 else vals[0]

    def block(self, key: str, width: int) -> np.ndarray:
        count = self.scalar(key, int)
        rows = []
        for i in range(count):
            toks = self.next(key)
            try:
                row = [float(t) for t in toks]
            except ValueError:
                raise ModelFormatError(f"corrupt number in block '{key}' row {i}", key) from None
            if len(row) != width:
                raise ModelFormatError(f"block '{key}' row {i} has {len(row)} values, expected {width}", key)
            rows.append(row)
        return np.array(rows, dtype=float).reshape(count, width)


def deserialize(text: str) -> SplineModel:
    rd = _Reader(text)
    head = rd.next("header")
    if head != [FORMAT_NAME]:
        raise ModelFormatError(f"not a {FORMAT_NAME} document", "header")
    toks = rd.next("version")
    if toks[0] != "version" or len(toks) != 2:
        raise ModelFormatError("missing field 'version'", "version")
    if toks[1] != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported model version '{toks[1]}' (expected '{FORMAT_VERSION}')", "version")
    m = rd.scalar("m", int)
    d = rd.scalar("d", int)
    domain = rd.scalar("domain")
    if not isinstance(domain, list) or len(domain) != 2:
        raise ModelFormatError("field 'domain' needs two numbers", "domain")
    lam = rd.scalar("lambda")
    J = rd.scalar("J")
    En = rd.scalar("En")
    anchors = rd.block("anchors", d)
    knots = rd.block("knots", d)
    c = rd.block("c", 1)[:, 0]
    dcoef = rd.block("dcoef", 1)[:, 0]
    setup = make_setup(m, d, domain, anchors=anchors)
    if c.shape[0] != setup.M:
        raise ModelFormatError(f"block 'c' has {c.shape[0]} entries, expected {setup.M}", "c")
    if dcoef.shape[0] != knots.shape[0]:
        raise ModelFormatError(f"block 'dcoef' has {dcoef.shape[0]} entries, expected {knots.shape[0]}", "dcoef")
    return SplineModel(setup, knots, c, dcoef, lam, J, En)
