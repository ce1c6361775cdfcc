#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cachelab/errors.hpp"

namespace cachelab {

// ---------------------------------------------------------------------------
// Virtual time

/// Simulation clock. Instants are nanoseconds since the start of a run and
/// only move when the driver advances them.
struct VirtualClock {
  using rep = std::int64_t;
  using period = std::nano;
  using duration = std::chrono::duration<rep, period>;
  using time_point = std::chrono::time_point<VirtualClock>;
  static constexpr bool is_steady = true;
};

using VirtualDuration = VirtualClock::duration;
using VirtualInstant = VirtualClock::time_point;

inline constexpr VirtualDuration kForever = VirtualDuration::max();

VirtualDuration from_seconds(double seconds);
double to_seconds(VirtualDuration d);
inline double to_seconds(VirtualInstant t) { return to_seconds(t.time_since_epoch()); }

// ---------------------------------------------------------------------------
// Tokens

using TokenId = std::uint64_t;

/// Filler word used to pad field slots up to their fixed length.
inline constexpr std::string_view kFieldFillerWord = "__pad__";
/// Filler word used to pad fixed template text regions.
inline constexpr std::string_view kTemplateFillerWord = "__tpl__";
inline constexpr TokenId kFieldFillerToken = 1;
inline constexpr TokenId kTemplateFillerToken = 2;

struct TokenSeq {
  std::vector<TokenId> tokens;
  std::string source_text;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

/// Splits on whitespace; runs of [A-Za-z0-9_] are words, every other
/// character is a single-character token. Units map to ids by FNV-1a.
TokenSeq tokenize(std::string_view text);

/// The units tokenize maps to ids, as views into `text`.
std::vector<std::string_view> token_units(std::string_view text);

/// Units joined by single spaces; texts with equal tokens normalize equally.
std::string normalize_units(std::string_view text);

/// Stable id of a single unit, as used by tokenize.
TokenId token_id(std::string_view unit);

// ---------------------------------------------------------------------------
// Six-field input record

enum class FieldId : std::uint8_t { age, gender, disease_history, symptoms, duration, chief_complaint };
inline constexpr std::size_t kFieldCount = 6;
inline constexpr std::array<FieldId, kFieldCount> kAllFields = {
    FieldId::age,      FieldId::gender,  FieldId::disease_history,
    FieldId::symptoms, FieldId::duration, FieldId::chief_complaint};

std::string_view field_name(FieldId f);
FieldId parse_field(std::string_view name);
inline std::size_t field_index(FieldId f) { return static_cast<std::size_t>(f); }

enum class Gender : std::uint8_t { male, female };
std::string_view gender_label(Gender g);
Gender parse_gender(std::string_view s);

/// The ten predefined chief-complaint options.
const std::array<std::string_view, 10>& chief_complaint_options();

inline constexpr std::size_t kFreeTextCharLimit = 100;
inline constexpr int kMaxAge = 120;

struct FieldRecord {
  int age = 0;
  Gender gender = Gender::male;
  std::string disease_history;
  std::string symptoms;
  std::string duration;
  std::size_t chief_complaint = 0;  ///< index into chief_complaint_options()

  /// Throws RecordInvalid when any field is out of range.
  void validate() const;

  /// Canonical text of one field: ages as decimal words, enums as labels.
  std::string field_text(FieldId f) const;

  bool operator==(const FieldRecord&) const = default;
};

std::string age_to_words(int age);

/// One JSON object per line with the six field names as keys.
std::string to_json_line(const FieldRecord& r);
FieldRecord record_from_json_line(std::string_view line);
void write_records_jsonl(std::ostream& out, std::span<const FieldRecord> records);
std::vector<FieldRecord> read_records_jsonl(std::istream& in);

// ---------------------------------------------------------------------------
// Prompt template

struct FieldSlot {
  FieldId field = FieldId::age;
  std::string label;  ///< fixed text placed in the gap before this slot (not used for the first slot)
  std::size_t start_block = 0;
  std::size_t length_blocks = 1;
};

struct FieldSpan {
  FieldId field;
  std::size_t first_block;
  std::size_t block_count;

  std::size_t end_block() const { return first_block + block_count; }
};

struct SlotSpec {
  FieldId field;
  std::string label;
  std::size_t length_blocks;
};

struct PromptTemplate {
  std::string preamble;
  std::vector<FieldSlot> field_slots;
  std::size_t block_size = 16;
  std::string postamble;
  std::size_t total_blocks = 0;
  /// Every slot starts this many tokens past its block boundary; 0 keeps slots aligned.
  std::size_t misalign_tokens = 0;

  /// Places slots back to back on block boundaries. The preamble and each label
  /// occupy the fewest whole blocks that hold them, with at least `min_gap_blocks`
  /// blocks between consecutive slots. The postamble is padded so the prompt
  /// spans at least `min_total_blocks` blocks.
  static PromptTemplate layout(std::string preamble, std::vector<SlotSpec> slots,
                               std::size_t block_size, std::string postamble,
                               std::size_t min_gap_blocks = 2, std::size_t misalign_tokens = 0,
                               std::size_t min_total_blocks = 0);

  /// The six-field medical consultation template (50 blocks at block_size 16).
  static PromptTemplate medical(std::size_t block_size = 16);

  std::size_t total_tokens() const { return total_blocks * block_size; }
  const FieldSlot& slot(FieldId f) const;
  std::size_t slot_tokens(FieldId f) const { return slot(f).length_blocks * block_size; }

  /// Throws TemplateInvalid when the layout breaks an invariant.
  void validate() const;
};

/// Texts for each template slot, in slot order; nullopt renders an all-filler slot.
using SlotTexts = std::vector<std::optional<std::string>>;

/// Renders arbitrary slot contents; throws FieldTooLong when a text exceeds its slot.
TokenSeq render_slots(const PromptTemplate& tpl, const SlotTexts& texts);
TokenSeq render_prompt(const PromptTemplate& tpl, const FieldRecord& record);
std::vector<FieldSpan> field_boundaries(const PromptTemplate& tpl);

/// Template with its fixed regions pre-tokenized, for rendering many probes.
class CompiledTemplate {
 public:
  explicit CompiledTemplate(PromptTemplate tpl);

  const PromptTemplate& source() const { return tpl_; }

  /// Token-level rendering; a null entry renders an all-filler slot.
  /// Throws FieldTooLong when slot tokens exceed the slot.
  std::vector<TokenId> render(std::span<const std::vector<TokenId>* const> slot_tokens) const;

 private:
  PromptTemplate tpl_;
  std::vector<std::vector<TokenId>> gaps_;  // region before slot i, already padded
  std::vector<TokenId> tail_;               // postamble, already padded
};

}  // namespace cachelab
