"""Lock-free array primitives for numba kernels.

Each helper lowers to a single sequentially-consistent LLVM atomic
instruction on one element of a contiguous 1-D array, so kernels compiled
with ``nogil=True`` can share arrays across Python threads safely.
"""

from numba import types
from numba.core import cgutils
from numba.extending import intrinsic


def _element_ptr(context, builder, arr_t, arr_v, idx_v):
    ary = context.make_array(arr_t)(context, builder, arr_v)
    return cgutils.get_item_pointer(context, builder, arr_t, ary, [idx_v], wraparound=False)


@intrinsic
def cas(typingctx, arr, idx, expected, new):
    """Compare-and-swap ``arr[idx]``; returns the value seen before the attempt."""
    sig = arr.dtype(arr, types.intp, arr.dtype, arr.dtype)

    def codegen(context, builder, sig, args):
        ptr = _element_ptr(context, builder, sig.args[0], args[0], args[1])
        res = builder.cmpxchg(ptr, args[2], args[3], "seq_cst", "seq_cst")
        return builder.extract_value(res, 0)

    return sig, codegen


def _rmw(op):
    @intrinsic
    def rmw(typingctx, arr, idx, val):
        sig = arr.dtype(arr, types.intp, arr.dtype)

        def codegen(context, builder, sig, args):
            ptr = _element_ptr(context, builder, sig.args[0], args[0], args[1])
            return builder.atomic_rmw(op, ptr, args[2], "seq_cst")

        return sig, codegen

    return rmw


fetch_or = _rmw("or")
fetch_add = _rmw("add")
exchange = _rmw("xchg")
