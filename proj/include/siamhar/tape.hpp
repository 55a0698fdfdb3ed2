#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace siamhar {

/// Records differentiable operations in execution order and replays their
/// local backward rules in reverse.
///
/// Operations are appended as they run, so the record is topologically
/// ordered by construction. A tape is single-use: call backward() once,
/// then clear() or discard it.
class Tape {
public:
    /// Receives the gradient flowing into the operation's output and
    /// accumulates into the gradients of its inputs.
    using BackwardFn = std::function<void(std::span<const double> grad_out)>;

    void record(Tensor output, BackwardFn fn) {
        produced_.insert(output.id());
        nodes_.push_back(Node{std::move(output), std::move(fn)});
    }

    bool produced(const Tensor& t) const { return produced_.count(t.id()) != 0; }
    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t last_backward_visits() const noexcept { return visits_; }

    void backward(Tensor loss) {
        if (loss.numel() != 1) {
            throw ContractError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
        }
        if (!produced(loss) && !loss.requires_grad()) {
            throw ContractError("backward: loss was not produced on this tape");
        }
        if (consumed_) throw ContractError("backward: tape already consumed");
        consumed_ = true;
        loss.ensure_grad()[0] += 1.0;
        visits_ = 0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            ++visits_;
            if (!it->output.has_grad()) continue;
            it->fn(it->output.grad());
        }
    }

    void clear() {
        nodes_.clear();
        produced_.clear();
        consumed_ = false;
        visits_ = 0;
    }

private:
    struct Node {
        Tensor output;
        BackwardFn fn;
    };

    std::vector<Node> nodes_;
    std::unordered_set<const void*> produced_;
    bool consumed_ = false;
    std::size_t visits_ = 0;
};

namespace detail {

inline bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
    for (const Tensor* t : inputs) {
        if (t && t->requires_grad()) return true;
    }
    return false;
}

/// True when the op should be recorded: a tape is active and some input
/// participates in differentiation.
inline bool recording(Tape* tape, std::initializer_list<const Tensor*> inputs) {
    return tape != nullptr && any_requires_grad(inputs);
}

/// Checks the freshly computed output, and if recording, marks it as
/// differentiable and pushes the backward rule.
inline Tensor finish(Tensor out, const char* op, Tape* tape, bool record, Tape::BackwardFn fn) {
    check_finite(out.data(), op);
    if (record) {
        out.set_requires_grad(true);
        tape->record(out, std::move(fn));
    }
    return out;
}

}  // namespace detail

}  // namespace siamhar
