#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vppo {

// Character-level tokenizer over a fixed lowercase alphabet plus six special
// tokens. Each tag marker is a single token id so answer extraction never
// depends on how the model spells a tag.
class Tokenizer {
public:
    static constexpr int kBos = 0;
    static constexpr int kEos = 1;
    static constexpr int kThinkOpen = 2;
    static constexpr int kThinkClose = 3;
    static constexpr int kAnswerOpen = 4;
    static constexpr int kAnswerClose = 5;
    static constexpr int kNumSpecials = 6;

    // ordered char set; kept deliberately small (task text + prompt template).
    // A lean vocab keeps the cold-start odds of sampling a well-formed answer
    // workable.
    static constexpr std::string_view kAlphabet = " .,:?+=0123456789ademinorstuw";

    Tokenizer() {
        for (size_t i = 0; i < kAlphabet.size(); ++i)
            char_to_id_[kAlphabet[i]] = kNumSpecials + static_cast<int>(i);
    }

    int vocab_size() const { return kNumSpecials + static_cast<int>(kAlphabet.size()); }

    static constexpr std::array<std::string_view, kNumSpecials> kMarkers = {
        "<bos>", "<eos>", "<think>", "</think>", "<answer>", "</answer>"};

    // Greedy scan: tag markers first, else single characters. Unknown
    // characters are an error.
    std::vector<int> encode(std::string_view text) const {
        std::vector<int> out;
        out.reserve(text.size());
        size_t i = 0;
        while (i < text.size()) {
            bool matched = false;
            for (int s = kThinkOpen; s <= kAnswerClose; ++s) {
                std::string_view m = kMarkers[static_cast<size_t>(s)];
                if (text.substr(i, m.size()) == m) {
                    out.push_back(s);
                    i += m.size();
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
            auto it = char_to_id_.find(text[i]);
            if (it == char_to_id_.end())
                throw std::invalid_argument(std::string("tokenizer: character '") + text[i] +
                                            "' not in alphabet");
            out.push_back(it->second);
            ++i;
        }
        return out;
    }

    // BOS/EOS decode to nothing so reward extraction sees clean text.
    std::string decode(const std::vector<int>& ids) const {
        std::string out;
        for (int id : ids) {
            if (id == kBos || id == kEos) continue;
            out += token_text(id);
        }
        return out;
    }

    std::string token_text(int id) const {
        if (id < 0 || id >= vocab_size())
            throw std::invalid_argument("tokenizer: token id " + std::to_string(id) +
                                        " out of range");
        if (id < kNumSpecials) return std::string(kMarkers[static_cast<size_t>(id)]);
        return std::string(1, kAlphabet[static_cast<size_t>(id - kNumSpecials)]);
    }

    bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }

private:
    std::unordered_map<char, int> char_to_id_;
};

}  // namespace vppo
