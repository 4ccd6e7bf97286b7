"""Hierarchical hard thresholding pursuit for block- and tree-sparse recovery."""
from .model import (FlatSparsity, HierarchicalSupport, SparsityTree, TreeNode, complete_tree,
                    flatten_support, is_sparse, project)
from .threshold import (brute_force_flat, brute_force_tree, select_top_k, threshold,
                        threshold_flat, threshold_tree)
from .measure import (DenseOperator, SubsampledDFTOperator, gaussian_operator,
                      normalize_columns, subsampled_dft, unnormalize_solution)
from .solve import SolveResult, SolverOptions, hihtp, htp, restricted_least_squares
from .ripcalc import (exhaustive_rip, gaussian_sample_bound, guarantee_constants,
                      monte_carlo_rip, tree_sample_bound)

__version__ = "0.1.0"
