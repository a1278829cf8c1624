#pragma once

namespace tpbnn {

// Keep large parameter-sized buffers on the heap instead of a fresh mmap per
// allocation; a no-op outside glibc.
void tune_allocator();

}  // namespace tpbnn
