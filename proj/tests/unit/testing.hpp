#pragma once

// torch's logging shim unconditionally defines glog-style CHECK macros.
// Pull torch in first (spending its include guard), drop those macros, then
// let doctest define the assertion macros the tests actually mean.
#include <torch/torch.h>

#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_LE
#undef CHECK_LT
#undef CHECK_GE
#undef CHECK_GT
#undef DCHECK
#undef DCHECK_EQ
#undef DCHECK_NE
#undef DCHECK_LE
#undef DCHECK_LT
#undef DCHECK_GE
#undef DCHECK_GT

#include <doctest.h>
