"""
Module d'algèbre multilinéaire dense
Tenseur N-way immuable + dépliement, repliement, produit mode-n,
produit scalaire, norme de Frobenius, composition de Tucker.

Convention de linéarisation (unique dans tout le projet) :
- les données sont un ndarray float64 en ordre C (dernier indice le plus rapide)
- unfold(t, n) = moveaxis(t, n, 0).reshape(I_n, -1) : la colonne j énumère
  les modes restants dans l'ordre croissant, le dernier variant le plus vite
- les modes sont numérotés à partir de 0 (axes numpy)
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt
import pandas as pd

from horpca.errors import NonFiniteError, ShapeError

Matrix = npt.NDArray[np.float64]

_MAGIC = b"HTNS"


class DenseTensor:
    """
    Tenseur dense réel, immuable une fois construit.

    Sert de support à B, X, E, O et aux multiplicateurs Y_i.
    """

    __slots__ = ("_data",)

    def __init__(self, data, *, copy=True):
        """
        Args:
            data: tableau (ou objet convertible) de dimension N >= 1
            copy: copier les données (False si l'appelant cède le tableau)
        """
        if copy:
            array = np.array(data, dtype=np.float64, order="C")
        else:
            array = np.asarray(data, dtype=np.float64, order="C")
        if array.ndim < 1:
            raise ShapeError("❌ Un tenseur doit avoir au moins une dimension")
        if any(dim < 1 for dim in array.shape):
            raise ShapeError(f"❌ Dimensions invalides : {array.shape}")
        if not np.all(np.isfinite(array)):
            raise NonFiniteError("❌ Le tenseur contient des valeurs NaN ou infinies")
        array.setflags(write=False)
        self._data = array

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(tuple(shape)), copy=False)

    @property
    def data(self):
        return self._data

    @property
    def shape(self):
        return self._data.shape

    @property
    def ndim(self):
        return self._data.ndim

    @property
    def size(self):
        return self._data.size

    def __array__(self, dtype=None, copy=None):
        if dtype is None and not copy:
            return self._data
        return self._data.astype(dtype or np.float64, copy=True)

    def __eq__(self, other):
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return np.array_equal(self._data, other._data)

    __hash__ = None

    def __add__(self, other):
        return DenseTensor(self._data + np.asarray(other), copy=False)

    def __sub__(self, other):
        return DenseTensor(self._data - np.asarray(other), copy=False)

    def __mul__(self, scalar):
        return DenseTensor(self._data * float(scalar), copy=False)

    __rmul__ = __mul__

    def __repr__(self):
        return f"DenseTensor(shape={self.shape}, norm={frob_norm(self):.4g})"


@dataclass(frozen=True)
class TuckerFactors:
    """Noyau G et matrices de facteurs U^(n) à colonnes orthonormées."""

    core: DenseTensor
    factors: tuple

    def __post_init__(self):
        factors = tuple(np.asarray(u, dtype=np.float64) for u in self.factors)
        object.__setattr__(self, "factors", factors)
        if len(factors) != self.core.ndim:
            raise ShapeError(
                f"❌ {len(factors)} facteurs pour un noyau d'ordre {self.core.ndim}"
            )
        for n, u in enumerate(factors):
            if u.ndim != 2 or u.shape[1] != self.core.shape[n]:
                raise ShapeError(
                    f"❌ Facteur {n} de forme {u.shape} incompatible avec le noyau {self.core.shape}"
                )
            gram = u.T @ u
            if not np.allclose(gram, np.eye(u.shape[1]), rtol=0, atol=1e-10):
                raise ValueError(f"❌ Les colonnes du facteur {n} ne sont pas orthonormées")

    @property
    def shape(self):
        return tuple(u.shape[0] for u in self.factors)

    @property
    def rank(self):
        return self.core.shape


def _check_mode(mode, ndim):
    if not 0 <= mode < ndim:
        raise ShapeError(f"❌ Mode {mode} hors limites pour un tenseur d'ordre {ndim}")


def unfold(t, mode):
    """
    Dépliement mode-n : les fibres mode-n deviennent les colonnes.

    Args:
        t: DenseTensor (ou ndarray)
        mode: axe à placer en lignes (0-based)

    Returns:
        Matrix: matrice I_mode x prod(I_k, k != mode)
    """
    array = np.asarray(t)
    _check_mode(mode, array.ndim)
    return np.moveaxis(array, mode, 0).reshape(array.shape[mode], -1)


def fold_array(m, mode, shape):
    """Inverse de unfold sur des ndarrays (sans contrôle de finitude)."""
    shape = tuple(int(dim) for dim in shape)
    _check_mode(mode, len(shape))
    m = np.asarray(m)
    moved = (shape[mode],) + shape[:mode] + shape[mode + 1:]
    expected = (shape[mode], int(np.prod(moved[1:], dtype=np.int64)))
    if m.shape != expected:
        raise ShapeError(f"❌ Matrice {m.shape} incompatible : attendu {expected} pour la forme {shape}")
    return np.moveaxis(m.reshape(moved), 0, mode)


def fold(m, mode, shape):
    """
    Repliement : inverse exact de unfold.

    Args:
        m: matrice I_mode x prod(autres dimensions)
        mode: mode du dépliement d'origine
        shape: forme du tenseur à reconstruire

    Returns:
        DenseTensor
    """
    return DenseTensor(fold_array(m, mode, shape))


def mode_n_product(t, a, mode):
    """
    Produit mode-n : chaque fibre mode-n est multipliée par la matrice a.

    Args:
        t: DenseTensor
        a: matrice J x I_mode
        mode: mode du produit

    Returns:
        DenseTensor: forme de t avec I_mode remplacé par J
    """
    array = np.asarray(t)
    _check_mode(mode, array.ndim)
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != array.shape[mode]:
        raise ShapeError(f"❌ Matrice {a.shape} incompatible avec le mode {mode} de {array.shape}")
    shape = list(array.shape)
    shape[mode] = a.shape[0]
    return fold(a @ unfold(array, mode), mode, shape)


def inner(t1, t2):
    """Somme des produits élément par élément."""
    a, b = np.asarray(t1), np.asarray(t2)
    if a.shape != b.shape:
        raise ShapeError(f"❌ Formes différentes : {a.shape} et {b.shape}")
    return float(np.vdot(a, b))


def frob_norm(t):
    """Norme de Frobenius ||t||_F = sqrt(<t, t>)."""
    return float(np.linalg.norm(np.asarray(t).ravel()))


def tucker_compose(f):
    """
    Reconstruit X = G x_1 U^(1) x_2 U^(2) ... x_N U^(N).

    Args:
        f: TuckerFactors

    Returns:
        DenseTensor de forme (I_1, ..., I_N)
    """
    result = f.core
    for n, u in enumerate(f.factors):
        result = mode_n_product(result, u, n)
    return result


def n_rank(t, mode, rel_tol=1e-8):
    """Rang numérique du dépliement mode-n (sigma > rel_tol * sigma_max)."""
    singular_values = np.linalg.svd(unfold(t, mode), compute_uv=False)
    if singular_values.size == 0 or singular_values[0] == 0:
        return 0
    return int(np.sum(singular_values > rel_tol * singular_values[0]))


def tucker_rank(t, rel_tol=1e-8):
    """Tuple des n-rangs numériques."""
    return tuple(n_rank(t, mode, rel_tol) for mode in range(np.ndim(t)))


# ============================================================
# SÉRIALISATION
# ============================================================

def save_tensor(path, t):
    """
    Sauvegarde binaire : "HTNS", uint32 N, N x uint64 dimensions,
    puis les float64 little-endian en ordre C.
    """
    array = np.asarray(t)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", array.ndim))
        f.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        f.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def load_tensor(path):
    """Relit un tenseur écrit par save_tensor."""
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ShapeError(f"❌ {path} n'est pas un fichier tenseur HTNS")
    (ndim,) = struct.unpack_from("<I", raw, 4)
    shape = struct.unpack_from(f"<{ndim}Q", raw, 8)
    offset = 8 + 8 * ndim
    expected = int(np.prod(shape, dtype=np.int64)) * 8
    if len(raw) - offset != expected:
        raise ShapeError(f"❌ Taille de {path} incohérente avec la forme {shape}")
    data = np.frombuffer(raw, dtype="<f8", offset=offset).reshape(shape)
    return DenseTensor(data.astype(np.float64))


def to_long_csv(path, t):
    """Écrit le format long i0,i1,...,value (une ligne par entrée)."""
    array = np.asarray(t)
    index = np.indices(array.shape).reshape(array.ndim, -1)
    frame = pd.DataFrame({f"i{n}": index[n] for n in range(array.ndim)})
    frame["value"] = array.ravel()
    frame.to_csv(path, index=False, float_format="%.17g")


def from_long_csv(path, shape=None):
    """
    Relit le format long. Les entrées absentes valent 0.

    Args:
        path: fichier CSV
        shape: forme imposée (sinon max des indices + 1)
    """
    frame = pd.read_csv(path)
    index_cols = [col for col in frame.columns if col != "value"]
    index = frame[index_cols].to_numpy(dtype=np.int64)
    if shape is None:
        shape = tuple(int(v) + 1 for v in index.max(axis=0))
    array = np.zeros(shape)
    array[tuple(index.T)] = frame["value"].to_numpy(dtype=np.float64)
    return DenseTensor(array, copy=False)
