"""Matrices printed in the source paper, transcribed verbatim."""

from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parent.parent / "data"

# four-state example, n = 2 agents with m = 2
EX_A = np.array([
    [-1, 0, 1, 0],
    [1, 0, -1, 0],
    [0, 1, 0, -1],
    [0, 1, 0, -1],
], dtype=float)

# rows annihilating EX_A from the left
EX_LEFT_NULL = np.array([
    [0, 0, -1, 1],
    [1, 1, 0, 0],
], dtype=float)

EX_E = np.array([
    [0.5, 0.5, 0.5, -0.5],
    [0.5, 0.5, -0.5, 0.5],
])

EX_LIMIT = np.vstack([EX_E, EX_E])

# retargeting pipeline
PIPE_T1 = np.array([
    [2, 0, 1, -1],
    [6, 4, -1, 1],
    [2, 0, -1, -1],
    [6, 4, -1, -1],
], dtype=float)

PIPE_B = np.array([
    [0, 0, 0, 0],
    [0, 0, 0, 0],
    [0, 0, -1, -1],
    [0, 0, 1, -1],
], dtype=float)

PIPE_T2 = np.array([
    [1, 0, 1, 0],
    [0, 1, 0, 1],
    [-1, 0, 1, 0],
    [0, -1, 0, 1],
], dtype=float)

PIPE_C = np.array([
    [-0.5, -0.5, 0.5, 0.5],
    [0.5, -0.5, -0.5, 0.5],
    [0.5, 0.5, -0.5, -0.5],
    [-0.5, 0.5, 0.5, -0.5],
])

PIPE_T = np.array([
    [1, 1, 3, -1],
    [7, 3, 5, 5],
    [3, 1, 1, -1],
    [7, 5, 5, 3],
], dtype=np.int64)
