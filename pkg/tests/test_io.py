"""Tests for the binary tensor and basis file formats."""

import numpy as np
import pytest

from mgcs.errors import ConfigurationError, DomainError
from mgcs.io import (
    config_fingerprint,
    load_basis,
    load_tensor,
    save_basis,
    save_tensor,
)
from mgcs.estimator import BasisSpec
from mgcs.waveform import SystemConfig


def test_tensor_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    t = rng.normal(size=(3, 4, 2)) + 1j * rng.normal(size=(3, 4, 2))
    p = tmp_path / "t.bin"
    save_tensor(p, t)
    back = load_tensor(p)
    assert back.shape == t.shape
    assert np.array_equal(back, t)  # exact float64 bits


def test_tensor_bad_magic(tmp_path):
    p = tmp_path / "t.bin"
    p.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(DomainError):
        load_tensor(p)


def test_tensor_truncated(tmp_path):
    rng = np.random.default_rng(1)
    t = rng.normal(size=(4, 4)) + 0j
    p = tmp_path / "t.bin"
    save_tensor(p, t)
    data = p.read_bytes()
    p.write_bytes(data[:-16])
    with pytest.raises(DomainError):
        load_tensor(p)


def test_fingerprint_sensitivity():
    a = SystemConfig(K=16, N=20, L=8, D=8, J=4)
    b = SystemConfig(K=16, N=20, L=8, D=8, J=8)
    assert config_fingerprint(a) != config_fingerprint(b)
    assert config_fingerprint(a) == config_fingerprint(a)
    assert config_fingerprint(a, prior_tag="x") != config_fingerprint(a)


def test_basis_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    blocks = np.stack(
        [np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))[0]
         for _ in range(3)]
    )
    basis = BasisSpec.from_blocks(blocks)
    p = tmp_path / "b.bin"
    save_basis(p, basis, "f" * 64)
    back = load_basis(p, "f" * 64)
    assert np.array_equal(back.blocks, blocks)


def test_basis_fingerprint_mismatch(tmp_path):
    p = tmp_path / "b.bin"
    save_basis(p, BasisSpec.dft(4, 3), "a" * 64)
    with pytest.raises(ConfigurationError):
        load_basis(p, "b" * 64)


def test_basis_corrupt_header(tmp_path):
    p = tmp_path / "b.bin"
    p.write_bytes(b"XXXX" + b"\x00" * 64)
    with pytest.raises(ConfigurationError):
        load_basis(p, "a" * 64)
