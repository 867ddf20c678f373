#include "support/mock_policies.hpp"

namespace remex::testing {

PolicyResponse FuzzPolicy::complete(const PolicyRequest&) {
    static const std::vector<std::string> fragments = {
        "<think>", "</think>", "<search", "</search>", "<answer>", "</answer>",
        "expert=\"text\"", "expert=\"video\"", "NULL", ">",
    };
    std::string text;
    const std::size_t length = rng_() % 120;
    for (std::size_t i = 0; i < length; ++i) {
        if (rng_() % 8 == 0) {
            text += fragments[rng_() % fragments.size()];
        } else {
            text.push_back(static_cast<char>(rng_() % 256));
        }
    }
    return {text, std::nullopt, FinishReason::Stop};
}

StochasticMockPolicy::Mode StochasticMockPolicy::draw_mode() {
    const std::uint64_t draw = rng_() % 10;
    if (draw < 4) {
        return Mode::Correct;
    }
    if (draw < 6) {
        return Mode::WrongAnswer;
    }
    if (draw < 8) {
        return Mode::Malformed;
    }
    return Mode::WrongExpert;
}

PolicyResponse StochasticMockPolicy::complete(const PolicyRequest& request) {
    if (!episode_active_) {
        episode_active_ = true;
        mode_ = draw_mode();
        actions_emitted_ = 0;
    }

    if (request.kind == RequestKind::Action) {
        ++actions_emitted_;
        if (actions_emitted_ == 1) {
            switch (mode_) {
                case Mode::Correct:
                case Mode::WrongAnswer:
                    return {"<think>look up " + item_.query.id + "</think><search expert=\"" +
                                to_string(item_.gold_expert) + "\">" + item_.gold_sub_query +
                                "</search>",
                            std::nullopt, FinishReason::Stop};
                case Mode::Malformed:
                    return {"<think>unterminated</think><search expert=\"video\">" +
                                item_.gold_sub_query,
                            std::nullopt, FinishReason::Stop};
                case Mode::WrongExpert: {
                    const ExpertKind wrong = item_.gold_expert == ExpertKind::Text
                                                 ? ExpertKind::Image
                                                 : ExpertKind::Text;
                    return {"<think>guessing</think><search expert=\"" + to_string(wrong) +
                                "\">" + item_.gold_sub_query + "</search>",
                            std::nullopt, FinishReason::Stop};
                }
            }
        }
        return {"<think>enough</think><search expert=\"text\">NULL</search>", std::nullopt,
                FinishReason::Stop};
    }

    if (request.kind == RequestKind::IntermediateAnswer) {
        return {"<answer>" + item_.gold_answer + "</answer>", std::nullopt, FinishReason::Stop};
    }

    episode_active_ = false;  // the final answer ends the episode
    const std::string answer =
        mode_ == Mode::WrongAnswer ? "wrong guess" : item_.gold_answer;
    return {"<answer>" + answer + "</answer>", std::nullopt, FinishReason::Stop};
}

}  // namespace remex::testing
