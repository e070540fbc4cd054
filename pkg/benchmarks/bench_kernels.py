"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--skip-large]

Operators are real drift generators: fadh_z (Liouville dimension 144) and
masuzawa7 (16384), each augmented with the yield row.
"""

import argparse
import timeit

import numpy as np
import scipy.sparse as sp

from rpcontrol.kernels import _pykernels, available_backends, kernel_csr
from rpcontrol.model import FieldSpec, fadh_z, masuzawa7
from rpcontrol.propagation import augment_generator, taylor_parameters
from rpcontrol.spin import singlet_projector
from rpcontrol.superop import NoiseModel, NoiseSpec, drift_liouvillian, singlet_state


def operator(name):
    system = fadh_z() if name == "fadh_z" else masuzawa7()
    L0 = drift_liouvillian(system, FieldSpec(0.5, 0.4, 0.2), 1.0, 1.0, NoiseSpec(NoiseModel.URF, 1.0))
    A = kernel_csr(augment_generator(L0, 1.0, singlet_projector(system.register)))
    v = np.append(singlet_state(system.register), 0.0).astype(np.complex128)
    return A, v


def cases(A, v, dt):
    n = A.shape[0]
    mu = complex(A.diagonal().sum() / n)
    norm = float(abs(A - mu * sp.identity(n, format="csr")).sum(axis=0).max())
    m, s = taylor_parameters(norm * dt)
    out = np.empty(n, dtype=np.complex128)
    return {
        "csr_matvec": lambda k: k.csr_matvec(A, v, out),
        f"taylor_action (m={m}, s={s})": lambda k: k.taylor_action(A, v, dt / s, mu, s, m, 1e-8),
        "dop853_linear (one step span)": lambda k: k.dop853_linear(A, v, dt, 1e-10, 1e-12, 0.0, 10**7),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-large", action="store_true", help="only benchmark the 144-dimensional operator")
    args = ap.parse_args()

    if "cython" not in available_backends():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    from rpcontrol.kernels import _ckernels
    backends = {"python": _pykernels, "cython": _ckernels}

    systems = [("fadh_z", 0.001)] + ([] if args.skip_large else [("masuzawa7", 0.005)])
    print(f"{'operator':<10} {'kernel':<32} {'python [ms]':>12} {'cython [ms]':>12} {'speed-up':>9}")
    for name, dt in systems:
        A, v = operator(name)
        for label, fn in cases(A, v, dt).items():
            ref = fn(_pykernels)
            got = fn(_ckernels)
            r = ref[0] if isinstance(ref, tuple) else ref
            g = got[0] if isinstance(got, tuple) else got
            # both backends must agree before their timings mean anything
            assert np.allclose(r, g, rtol=1e-9, atol=1e-13), f"{name}/{label}: backends disagree"
            times = {}
            for b, mod in backends.items():
                number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(mod), number=1), 1e-6)))
                times[b] = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            print(f"{name:<10} {label:<32} {1e3 * times['python']:>12.4f} {1e3 * times['cython']:>12.4f} "
                  f"{times['python'] / times['cython']:>8.1f}x")


if __name__ == "__main__":
    main()
