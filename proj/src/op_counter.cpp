#include "ecgl/op_counter.hpp"

#include <atomic>

namespace ecgl {
namespace {
std::atomic<std::uint64_t> g_csr_traversals{0};
}

std::uint64_t csr_traversals() noexcept { return g_csr_traversals.load(std::memory_order_relaxed); }
void reset_csr_traversals() noexcept { g_csr_traversals.store(0, std::memory_order_relaxed); }
void note_csr_traversal() noexcept { g_csr_traversals.fetch_add(1, std::memory_order_relaxed); }

}  // namespace ecgl
