"""Per-candidate X (term), Y (temporal) and Z (spatial) feature bundles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import spatial_features as sf
from . import temporal as tf


def t_feature_names() -> list[str]:
    """Layout of the term+temporal classifier input."""
    return tf.term_feature_names() + tf.temporal_feature_names()


def st_feature_names() -> list[str]:
    """Layout of the term+temporal+spatial classifier input."""
    return t_feature_names() + sf.feature_names()


@dataclass
class CandidateFeatures:
    term: str
    X: tf.TermFeatureVector
    Y: tf.TemporalFeatureVector
    Z: sf.SpatialFeatureVector
    tile: Optional[int] = None

    @property
    def spatial_available(self) -> bool:
        """True when the candidate-with-query pattern could be measured in a tile."""
        return self.tile is not None and self.Z.role_valid("2")

    def t_vector(self) -> np.ndarray:
        return np.concatenate([self.X.as_array(), self.Y.as_array()])

    def st_vector(self) -> np.ndarray:
        return np.concatenate([self.t_vector(), self.Z.as_array()])

    def row(self) -> dict[str, float]:
        return dict(zip(st_feature_names(), self.st_vector().tolist()))


class FeatureExtractor:
    """Computes CandidateFeatures, sharing spatial profiles across calls."""

    def __init__(self, corpus, tiles=None, bin_width: int = tf.WEEK, max_lag: int = tf.DEFAULT_MAX_LAG,
                 profiler: Optional[sf.SpatialProfiler] = None, spatial: bool = True):
        self.corpus = corpus
        self.tiles = tiles
        self.bin_width = bin_width
        self.max_lag = max_lag
        self.spatial = spatial and tiles is not None
        if self.spatial and profiler is None:
            profiler = sf.SpatialProfiler(corpus, tiles)
        self.profiler = profiler

    @property
    def grid_len(self) -> int:
        return len(self.profiler.grid) if self.profiler is not None else len(sf.scale_grid())

    def extract(self, e: str, query_terms: Sequence[str], feedback_positions,
                tile: Optional[int], spatial: Optional[bool] = None) -> CandidateFeatures:
        X = tf.term_features(e, query_terms, feedback_positions, self.corpus)
        Y = tf.temporal_features(e, query_terms, self.corpus, self.bin_width, self.max_lag)
        use_spatial = self.spatial if spatial is None else (spatial and self.spatial)
        if use_spatial and tile is not None:
            Z = sf.assemble_spatial_vector(e, query_terms, tile, self.profiler)
        else:
            Z = sf.SpatialFeatureVector.empty(self.grid_len)
            tile = None
        return CandidateFeatures(e, X, Y, Z, tile)


def write_feature_csv(rows, fh) -> None:
    """``rows`` are (qid, CandidateFeatures); one CSV line each."""
    names = st_feature_names()
    fh.write(",".join(["qid", "term", "tile"] + names) + "\n")
    for qid, cf in rows:
        vals = [repr(float(v)) for v in cf.st_vector()]
        tile = "" if cf.tile is None else str(cf.tile)
        fh.write(",".join([qid, cf.term, tile] + vals) + "\n")
