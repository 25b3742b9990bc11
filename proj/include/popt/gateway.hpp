#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "popt/records.hpp"

namespace popt::gateway {

// ---------------------------------------------------------------------------
// Requests
// ---------------------------------------------------------------------------

enum class TemplateId {
    fewshot_optimize,  // slots: query
    critique_refine,   // slots: query, prompt [, critique]
    alignment_judge,   // slots: query, prompt
    safety_judge,      // slots: text
};

std::string to_string(TemplateId id);

/// Slot order is preserved; it participates in mock-backend hashing.
using SlotList = std::vector<std::pair<std::string, std::string>>;

struct ChatRequest {
    TemplateId template_id = TemplateId::fewshot_optimize;
    SlotList slots;
    double temperature = 0.0;
    std::optional<std::uint64_t> seed;
    int max_retries = 3;

    const std::string* find_slot(std::string_view name) const;
};

struct ChatResponse {
    std::string content;
    std::string backend_id;
    int attempt_count = 1;
};

// ---------------------------------------------------------------------------
// Templates
//
// The judge and refiner reply in a fixed machine-parseable format:
//   - one verdict line per principle:   `HARMLESS: PASS|FAIL <sep> <issue>`
//   - prompt bodies fenced between      `<<<` and `>>>` lines
// ---------------------------------------------------------------------------

inline constexpr const char* kPromptFenceOpen = "<<<";
inline constexpr const char* kPromptFenceClose = ">>>";
inline constexpr const char* kIssueSeparator = " \xe2\x80\x94 ";  // " — "

/// Renders the template with each slot value substituted exactly once.
/// Missing required slots raise a validation error naming the slot.
std::string render_template(TemplateId id, const SlotList& slots);

std::vector<std::string> required_slots(TemplateId id);

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    virtual std::string backend_id() const = 0;
};

/// Single entry point used by the pipeline; validates the request against
/// the template's required slots before dispatching.
ChatResponse complete(const ChatRequest& request, ChatBackend& backend);

// ---------------------------------------------------------------------------
// Structured-output parsing
// ---------------------------------------------------------------------------

/// Parses the three verdict lines. `flawed` is derived from the verdicts.
/// The raw content is embedded in the error message on failure for audit.
Critique parse_critique(const std::string& raw);

/// Extracts the prompt body between the fence lines and trims it.
std::string parse_refinement(const std::string& raw);

/// Parses `VERDICT: <aligned|unsafe|imprecise|refusal>` plus optional REASON.
struct AlignmentReply {
    std::string category;
    std::string rationale;
};
AlignmentReply parse_alignment(const std::string& raw);

/// Parses `LEVEL: <1-4>`; anything outside 1..4 is a parse error.
int parse_safety_level(const std::string& raw);

}  // namespace popt::gateway
