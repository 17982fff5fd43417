#pragma once

// Maps every value in a JSON document to the 1-based line on which it starts,
// keyed by JSON pointer. nlohmann::json drops source positions after parsing,
// so loaders use this side table to report semantic errors by line.

#include <cctype>
#include <map>
#include <string>
#include <string_view>

namespace marvin {

class JsonLineIndex {
public:
    explicit JsonLineIndex(std::string_view text) : text_(text) {
        skip_ws();
        if (pos_ < text_.size()) value("");
    }

    /// Line of the value at `pointer`, or of the closest enclosing value.
    int line_of(std::string pointer) const {
        while (true) {
            auto it = lines_.find(pointer);
            if (it != lines_.end()) return it->second;
            auto cut = pointer.rfind('/');
            if (cut == std::string::npos) return 1;
            pointer.resize(cut);
        }
    }

private:
    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            if (text_[pos_] == '\n') ++line_;
            ++pos_;
        }
    }

    std::string string_token() {
        std::string out;
        ++pos_;  // opening quote
        while (pos_ < text_.size() && text_[pos_] != '"') {
            if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) {
                out.push_back(text_[pos_ + 1]);
                pos_ += 2;
                continue;
            }
            if (text_[pos_] == '\n') ++line_;
            out.push_back(text_[pos_++]);
        }
        ++pos_;  // closing quote
        return out;
    }

    static std::string escape(const std::string& key) {
        std::string out;
        for (char c : key) {
            if (c == '~') out += "~0";
            else if (c == '/') out += "~1";
            else out.push_back(c);
        }
        return out;
    }

    void value(const std::string& pointer) {
        skip_ws();
        if (pos_ >= text_.size()) return;
        lines_.emplace(pointer, line_);
        const char c = text_[pos_];
        if (c == '{') {
            ++pos_;
            skip_ws();
            while (pos_ < text_.size() && text_[pos_] != '}') {
                if (text_[pos_] != '"') return;  // malformed; the real parser reports it
                std::string key = string_token();
                skip_ws();
                if (pos_ < text_.size() && text_[pos_] == ':') ++pos_;
                value(pointer + "/" + escape(key));
                skip_ws();
                if (pos_ < text_.size() && text_[pos_] == ',') {
                    ++pos_;
                    skip_ws();
                }
            }
            ++pos_;
        } else if (c == '[') {
            ++pos_;
            skip_ws();
            std::size_t index = 0;
            while (pos_ < text_.size() && text_[pos_] != ']') {
                value(pointer + "/" + std::to_string(index++));
                skip_ws();
                if (pos_ < text_.size() && text_[pos_] == ',') {
                    ++pos_;
                    skip_ws();
                } else if (pos_ < text_.size() && text_[pos_] != ']') {
                    return;
                }
            }
            ++pos_;
        } else if (c == '"') {
            string_token();
        } else {
            while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != '}' && text_[pos_] != ']' &&
                   !std::isspace(static_cast<unsigned char>(text_[pos_])))
                ++pos_;
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    std::map<std::string, int> lines_;
};

}  // namespace marvin
