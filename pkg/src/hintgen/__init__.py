"""Learned subplan hints for a simulated cost-based join optimizer.

The pipeline generates a synthetic workload, samples random hint sets per
query, keeps significantly improving pairs, trains a conditional VAE on them
and uses it to turn a random hint set into a better one at query time.
"""

__version__ = "0.1.0"

from .engine import JoinType, SimulatedEngine, optimize
from .genmodel import HintVAE, load_model, save_model, train
from .pipeline import HintOptimizer
from .workload import QuerySpec, SchemaGraph, Workload, gen_schema, gen_workload

__all__ = [
    "HintOptimizer", "HintVAE", "JoinType", "QuerySpec", "SchemaGraph", "SimulatedEngine",
    "Workload", "gen_schema", "gen_workload", "load_model", "optimize", "save_model", "train",
]
