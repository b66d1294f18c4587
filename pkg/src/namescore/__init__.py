"""namescore: predict a file's maliciousness from its file name alone.

Modules: corpus (ingestion/filtering/synthesis), features (vocabularies and
3-gram vectors), numkit (differentiable kernels + Adam), linear (regularized
logistic regression), charcnn (character CNN + embeddings), fusion (dense
feature MLP), evaluate (metrics, ROC/AUC, lookup baseline), cluster (density
clustering + projection), cli (command line).
"""

__version__ = "0.1.0"
