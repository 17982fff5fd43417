#pragma once

#include <map>
#include <vector>

#include "marvin/common.hpp"

namespace marvin {

struct Message {
    Matrix features;  // n x channels
    double timestamp = 0.0;
};

/// Receiver-side store keeping only the most recent message of each sender.
class Inbox {
public:
    void store(std::size_t sender, Message msg) {
        if (expected_rows_ && (msg.features.rows != expected_rows_ || msg.features.cols != expected_cols_))
            throw Error("inbox: message shape " + std::to_string(msg.features.rows) + "x" +
                        std::to_string(msg.features.cols) + " does not match " + std::to_string(expected_rows_) + "x" +
                        std::to_string(expected_cols_));
        messages_[sender] = std::move(msg);
    }

    void expect_shape(std::size_t rows, std::size_t cols) {
        expected_rows_ = rows;
        expected_cols_ = cols;
    }

    std::size_t size() const { return messages_.size(); }
    bool empty() const { return messages_.empty(); }
    const std::map<std::size_t, Message>& messages() const { return messages_; }

    /// Messages ordered by sender id; the copy is the consistent view a
    /// decision reads.
    std::vector<Matrix> snapshot() const {
        std::vector<Matrix> out;
        out.reserve(messages_.size());
        for (const auto& [sender, m] : messages_) out.push_back(m.features);
        return out;
    }

private:
    std::map<std::size_t, Message> messages_;
    std::size_t expected_rows_ = 0;
    std::size_t expected_cols_ = 0;
};

}  // namespace marvin
