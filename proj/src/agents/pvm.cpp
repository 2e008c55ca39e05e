#include "rlalloc/agents.hpp"
#include "rlalloc/errors.hpp"

namespace rlalloc::agents {

PortfolioVectorMemory::PortfolioVectorMemory(std::size_t n_assets, std::size_t tail_length)
    : n_assets_(n_assets), tail_length_(tail_length) {
    if (n_assets == 0) throw ArgumentError("portfolio vector memory needs at least one asset");
}

WeightVector PortfolioVectorMemory::at(std::size_t t) const {
    auto it = store_.find(t);
    return it != store_.end() ? it->second : WeightVector::uniform(n_assets_);
}

std::vector<WeightVector> PortfolioVectorMemory::read(std::size_t t) const {
    std::vector<WeightVector> tail;
    tail.reserve(tail_length_);
    const WeightVector uniform = WeightVector::uniform(n_assets_);
    for (std::size_t k = tail_length_; k > 0; --k) {
        if (t < k) {
            tail.push_back(uniform);
            continue;
        }
        auto it = store_.find(t - k);
        tail.push_back(it != store_.end() ? it->second : uniform);
    }
    return tail;
}

void PortfolioVectorMemory::write(std::size_t t, WeightVector w) {
    if (w.size() != n_assets_) {
        throw ArgumentError("weight vector of size " + std::to_string(w.size()) + " written to memory for " +
                            std::to_string(n_assets_) + " assets");
    }
    store_.insert_or_assign(t, std::move(w));
}

}  // namespace rlalloc::agents
