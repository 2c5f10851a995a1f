import os

# Pin BLAS threading before numpy loads so reruns of the suite are
# bit-reproducible regardless of the machine's core count.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")
