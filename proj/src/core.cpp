#include "cachelab/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace cachelab {

VirtualDuration from_seconds(double seconds) {
  if (!std::isfinite(seconds)) throw DomainError("non-finite duration");
  return VirtualDuration(static_cast<std::int64_t>(std::llround(seconds * 1e9)));
}

double to_seconds(VirtualDuration d) { return static_cast<double>(d.count()) * 1e-9; }

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

}  // namespace

TokenId token_id(std::string_view unit) {
  if (unit == kFieldFillerWord) return kFieldFillerToken;
  if (unit == kTemplateFillerWord) return kTemplateFillerToken;
  std::uint64_t h = kFnvOffset;
  for (char c : unit) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  // ids below 16 are reserved
  return h < 16 ? h + 16 : h;
}

std::vector<std::string_view> token_units(std::string_view text) {
  std::vector<std::string_view> units;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c)) != 0) {
      ++i;
    } else if (is_word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(text[j])) ++j;
      units.push_back(text.substr(i, j - i));
      i = j;
    } else {
      units.push_back(text.substr(i, 1));
      ++i;
    }
  }
  return units;
}

std::string normalize_units(std::string_view text) {
  std::string out;
  for (std::string_view u : token_units(text)) {
    if (!out.empty()) out += ' ';
    out += u;
  }
  return out;
}

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  out.source_text = std::string(text);
  for (std::string_view u : token_units(text)) out.tokens.push_back(token_id(u));
  return out;
}

// ---------------------------------------------------------------------------

std::string_view field_name(FieldId f) {
  switch (f) {
    case FieldId::age: return "age";
    case FieldId::gender: return "gender";
    case FieldId::disease_history: return "disease_history";
    case FieldId::symptoms: return "symptoms";
    case FieldId::duration: return "duration";
    case FieldId::chief_complaint: return "chief_complaint";
  }
  return "?";
}

FieldId parse_field(std::string_view name) {
  for (FieldId f : kAllFields) {
    if (field_name(f) == name) return f;
  }
  throw RecordInvalid("unknown field '" + std::string(name) + "'");
}

std::string_view gender_label(Gender g) { return g == Gender::male ? "male" : "female"; }

Gender parse_gender(std::string_view s) {
  if (s == "male") return Gender::male;
  if (s == "female") return Gender::female;
  throw RecordInvalid("unknown gender '" + std::string(s) + "'");
}

const std::array<std::string_view, 10>& chief_complaint_options() {
  static const std::array<std::string_view, 10> options = {
      "treatment options",   "medication management", "dietary advice",
      "test interpretation", "second opinion",        "surgery consultation",
      "lifestyle changes",   "symptom relief",        "prognosis",
      "prevention"};
  return options;
}

std::string age_to_words(int age) {
  static const char* const kOnes[] = {"zero",    "one",     "two",       "three",    "four",
                                      "five",    "six",     "seven",     "eight",    "nine",
                                      "ten",     "eleven",  "twelve",    "thirteen", "fourteen",
                                      "fifteen", "sixteen", "seventeen", "eighteen", "nineteen"};
  static const char* const kTens[] = {"",      "",      "twenty",  "thirty", "forty",
                                      "fifty", "sixty", "seventy", "eighty", "ninety"};
  if (age < 0 || age > kMaxAge) throw RecordInvalid("age out of range");
  std::string out;
  int rest = age;
  if (rest >= 100) {
    out = "one hundred";
    rest -= 100;
    if (rest == 0) return out;
    out += ' ';
  }
  if (rest < 20) return out + kOnes[rest];
  out += kTens[rest / 10];
  if (rest % 10 != 0) {
    out += ' ';
    out += kOnes[rest % 10];
  }
  return out;
}

void FieldRecord::validate() const {
  if (age < 0 || age > kMaxAge) throw RecordInvalid("age out of range [0,120]");
  if (disease_history.size() > kFreeTextCharLimit)
    throw RecordInvalid("disease_history exceeds 100 characters");
  if (symptoms.size() > kFreeTextCharLimit) throw RecordInvalid("symptoms exceeds 100 characters");
  if (chief_complaint >= chief_complaint_options().size())
    throw RecordInvalid("chief_complaint is not one of the predefined options");
}

std::string FieldRecord::field_text(FieldId f) const {
  switch (f) {
    case FieldId::age: return age_to_words(age);
    case FieldId::gender: return std::string(gender_label(gender));
    case FieldId::disease_history: return disease_history;
    case FieldId::symptoms: return symptoms;
    case FieldId::duration: return duration;
    case FieldId::chief_complaint:
      return std::string(chief_complaint_options().at(chief_complaint));
  }
  return {};
}

std::string to_json_line(const FieldRecord& r) {
  nlohmann::ordered_json j;
  j["age"] = r.age;
  j["gender"] = gender_label(r.gender);
  j["disease_history"] = r.disease_history;
  j["symptoms"] = r.symptoms;
  j["duration"] = r.duration;
  j["chief_complaint"] = chief_complaint_options().at(r.chief_complaint);
  return j.dump();
}

FieldRecord record_from_json_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw RecordInvalid(std::string("malformed record: ") + e.what());
  }
  FieldRecord r;
  try {
    r.age = j.at("age").get<int>();
    r.gender = parse_gender(j.at("gender").get<std::string>());
    r.disease_history = j.at("disease_history").get<std::string>();
    r.symptoms = j.at("symptoms").get<std::string>();
    r.duration = j.at("duration").get<std::string>();
    const auto complaint = j.at("chief_complaint").get<std::string>();
    const auto& opts = chief_complaint_options();
    const auto it = std::find(opts.begin(), opts.end(), complaint);
    if (it == opts.end()) throw RecordInvalid("unknown chief_complaint '" + complaint + "'");
    r.chief_complaint = static_cast<std::size_t>(it - opts.begin());
  } catch (const nlohmann::json::exception& e) {
    throw RecordInvalid(std::string("malformed record: ") + e.what());
  }
  r.validate();
  return r;
}

void write_records_jsonl(std::ostream& out, std::span<const FieldRecord> records) {
  for (const auto& r : records) out << to_json_line(r) << '\n';
}

std::vector<FieldRecord> read_records_jsonl(std::istream& in) {
  std::vector<FieldRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(record_from_json_line(line));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::size_t slot_start_token(const PromptTemplate& tpl, const FieldSlot& s) {
  return s.start_block * tpl.block_size + tpl.misalign_tokens;
}

void pad_to(std::vector<TokenId>& tokens, std::size_t size, TokenId filler) {
  tokens.resize(std::max(tokens.size(), size), filler);
}

}  // namespace

PromptTemplate PromptTemplate::layout(std::string preamble, std::vector<SlotSpec> slots,
                                      std::size_t block_size, std::string postamble,
                                      std::size_t min_gap_blocks, std::size_t misalign_tokens,
                                      std::size_t min_total_blocks) {
  if (block_size == 0) throw TemplateInvalid("block_size must be >= 1");
  if (misalign_tokens >= block_size) throw TemplateInvalid("misalign_tokens must be < block_size");
  PromptTemplate tpl;
  tpl.block_size = block_size;
  tpl.misalign_tokens = misalign_tokens;
  tpl.preamble = std::move(preamble);
  tpl.postamble = std::move(postamble);

  std::size_t cursor = ceil_div(tokenize(tpl.preamble).size() + misalign_tokens, block_size);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto& spec = slots[i];
    if (spec.length_blocks == 0) throw TemplateInvalid("slot length must be >= 1 block");
    if (i > 0) {
      // the label occupies whole blocks; the slot shifts by misalign_tokens inside them
      const std::size_t label_tokens = tokenize(spec.label).size() + misalign_tokens;
      cursor += std::max(min_gap_blocks, ceil_div(label_tokens, block_size));
    }
    tpl.field_slots.push_back(FieldSlot{spec.field, std::move(spec.label), cursor, spec.length_blocks});
    cursor += spec.length_blocks;
  }
  const std::size_t tail_tokens = tokenize(tpl.postamble).size();
  // the last slot spills misalign_tokens into the first postamble block
  cursor += ceil_div(tail_tokens + misalign_tokens, block_size);
  tpl.total_blocks = std::max(cursor, min_total_blocks);
  tpl.validate();
  return tpl;
}

PromptTemplate PromptTemplate::medical(std::size_t block_size) {
  std::string preamble =
      "You are a careful medical consultation assistant working for an online clinic . "
      "A patient has completed the structured intake form below . Read every field "
      "carefully , consider the patient's age , gender , prior conditions and current "
      "symptoms , and give safe , practical and well organised guidance . Always remind "
      "the patient to seek emergency care for severe or rapidly worsening symptoms , "
      "and never claim certainty that a remote consultation cannot provide . "
      "Patient age :";
  std::vector<SlotSpec> slots = {
      {FieldId::age, "", 1},
      {FieldId::gender, "Patient gender as reported on the intake form :", 1},
      {FieldId::disease_history,
       "Known medical conditions and prior diagnoses listed by the patient :", 4},
      {FieldId::symptoms, "Symptoms the patient is currently experiencing :", 4},
      {FieldId::duration, "How long the symptoms have been present :", 2},
      {FieldId::chief_complaint, "What the patient most wants help with today :", 2},
  };
  std::string postamble =
      "Using the information above , write a response that first summarises the "
      "case in two sentences , then explains the most likely causes in plain "
      "language , then addresses the chief complaint directly with concrete next "
      "steps , and finally lists warning signs that require urgent attention . "
      "Keep the tone calm and supportive .";
  return layout(std::move(preamble), std::move(slots), block_size, std::move(postamble), 2, 0,
                800 / block_size);
}

const FieldSlot& PromptTemplate::slot(FieldId f) const {
  for (const auto& s : field_slots) {
    if (s.field == f) return s;
  }
  throw TemplateInvalid("template has no slot for field " + std::string(field_name(f)));
}

void PromptTemplate::validate() const {
  if (block_size == 0) throw TemplateInvalid("block_size must be >= 1");
  if (misalign_tokens >= block_size) throw TemplateInvalid("misalign_tokens must be < block_size");
  const std::size_t B = block_size;
  if (!field_slots.empty() &&
      tokenize(preamble).size() > slot_start_token(*this, field_slots.front()))
    throw TemplateInvalid("preamble does not fit before the first slot");
  for (std::size_t i = 0; i < field_slots.size(); ++i) {
    const auto& s = field_slots[i];
    if (s.length_blocks == 0) throw TemplateInvalid("slot length must be >= 1 block");
    for (std::size_t j = 0; j < i; ++j) {
      if (field_slots[j].field == s.field) throw TemplateInvalid("duplicate field slot");
    }
    if (i > 0) {
      const auto& prev = field_slots[i - 1];
      const std::size_t prev_end = prev.start_block + prev.length_blocks;
      if (s.start_block < prev_end + 2)
        throw TemplateInvalid("field slots must be separated by at least 2 blocks");
      const std::size_t gap_tokens = slot_start_token(*this, s) - slot_start_token(*this, prev) -
                                     prev.length_blocks * B;
      if (tokenize(s.label).size() > gap_tokens)
        throw TemplateInvalid("label does not fit in the gap before " +
                              std::string(field_name(s.field)));
    }
  }
  const std::size_t body_end =
      field_slots.empty()
          ? tokenize(preamble).size()
          : slot_start_token(*this, field_slots.back()) + field_slots.back().length_blocks * B;
  if (body_end + tokenize(postamble).size() > total_blocks * B)
    throw TemplateInvalid("postamble does not fit in total_blocks");
}

CompiledTemplate::CompiledTemplate(PromptTemplate tpl) : tpl_(std::move(tpl)) {
  tpl_.validate();
  const std::size_t B = tpl_.block_size;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < tpl_.field_slots.size(); ++i) {
    const auto& s = tpl_.field_slots[i];
    auto gap = tokenize(i == 0 ? tpl_.preamble : s.label).tokens;
    const std::size_t start = slot_start_token(tpl_, s);
    pad_to(gap, start - cursor, kTemplateFillerToken);
    gaps_.push_back(std::move(gap));
    cursor = start + s.length_blocks * B;
  }
  if (tpl_.field_slots.empty()) {
    tail_ = tokenize(tpl_.preamble).tokens;
    auto post = tokenize(tpl_.postamble).tokens;
    tail_.insert(tail_.end(), post.begin(), post.end());
  } else {
    tail_ = tokenize(tpl_.postamble).tokens;
  }
  pad_to(tail_, tpl_.total_blocks * B - cursor, kTemplateFillerToken);
}

std::vector<TokenId> CompiledTemplate::render(
    std::span<const std::vector<TokenId>* const> slot_tokens) const {
  if (slot_tokens.size() != tpl_.field_slots.size())
    throw TemplateInvalid("slot count does not match template");
  std::vector<TokenId> out;
  out.reserve(tpl_.total_tokens());
  for (std::size_t i = 0; i < gaps_.size(); ++i) {
    out.insert(out.end(), gaps_[i].begin(), gaps_[i].end());
    const std::size_t len = tpl_.field_slots[i].length_blocks * tpl_.block_size;
    if (const auto* toks = slot_tokens[i]) {
      if (toks->size() > len)
        throw FieldTooLong(std::string(field_name(tpl_.field_slots[i].field)) + " needs " +
                           std::to_string(toks->size()) + " tokens, slot holds " +
                           std::to_string(len));
      out.insert(out.end(), toks->begin(), toks->end());
      out.insert(out.end(), len - toks->size(), kFieldFillerToken);
    } else {
      out.insert(out.end(), len, kFieldFillerToken);
    }
  }
  out.insert(out.end(), tail_.begin(), tail_.end());
  return out;
}

TokenSeq render_slots(const PromptTemplate& tpl, const SlotTexts& texts) {
  if (texts.size() != tpl.field_slots.size())
    throw TemplateInvalid("slot count does not match template");
  const CompiledTemplate compiled(tpl);
  std::vector<std::vector<TokenId>> tokens(texts.size());
  std::vector<const std::vector<TokenId>*> ptrs(texts.size(), nullptr);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i]) {
      tokens[i] = tokenize(*texts[i]).tokens;
      ptrs[i] = &tokens[i];
    }
  }
  TokenSeq out;
  out.tokens = compiled.render(ptrs);

  // Text form: padded regions joined by spaces, so tokenize(source_text) == tokens.
  const std::size_t B = tpl.block_size;
  auto append_words = [&out](std::string_view word, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      if (!out.source_text.empty()) out.source_text += ' ';
      out.source_text += word;
    }
  };
  auto append_text = [&out](const std::string& text) {
    if (text.empty()) return;
    if (!out.source_text.empty()) out.source_text += ' ';
    out.source_text += text;
  };
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < tpl.field_slots.size(); ++i) {
    const auto& s = tpl.field_slots[i];
    const std::string& fixed = i == 0 ? tpl.preamble : s.label;
    const std::size_t start = slot_start_token(tpl, s);
    append_text(fixed);
    append_words(kTemplateFillerWord, start - cursor - tokenize(fixed).size());
    const std::size_t len = s.length_blocks * B;
    if (texts[i]) append_text(*texts[i]);
    append_words(kFieldFillerWord, len - tokens[i].size());
    cursor = start + len;
  }
  const std::string& tail = tpl.field_slots.empty() ? tpl.preamble : tpl.postamble;
  append_text(tail);
  if (tpl.field_slots.empty()) append_text(tpl.postamble);
  append_words(kTemplateFillerWord, out.tokens.size() - tokenize(out.source_text).size());
  return out;
}

TokenSeq render_prompt(const PromptTemplate& tpl, const FieldRecord& record) {
  record.validate();
  SlotTexts texts;
  texts.reserve(tpl.field_slots.size());
  for (const auto& s : tpl.field_slots) texts.emplace_back(record.field_text(s.field));
  return render_slots(tpl, texts);
}

std::vector<FieldSpan> field_boundaries(const PromptTemplate& tpl) {
  std::vector<FieldSpan> out;
  const std::size_t B = tpl.block_size;
  for (const auto& s : tpl.field_slots) {
    const std::size_t start = slot_start_token(tpl, s);
    const std::size_t end = start + s.length_blocks * B;
    out.push_back(FieldSpan{s.field, start / B, ceil_div(end, B) - start / B});
  }
  return out;
}

}  // namespace cachelab
