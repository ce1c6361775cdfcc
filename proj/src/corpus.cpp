#include "cachelab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cachelab/errors.hpp"
#include "cachelab/prefix_attack.hpp"

namespace cachelab {

namespace {

const std::vector<std::string> kDiseases = {
    "type two diabetes",       "hypertension",          "asthma",
    "chronic kidney disease",  "coronary artery disease", "migraine",
    "hypothyroidism",          "rheumatoid arthritis",  "osteoarthritis",
    "gout",                    "chronic bronchitis",    "epilepsy",
    "psoriasis",               "eczema",                "crohn disease",
    "ulcerative colitis",      "celiac disease",        "gastric reflux",
    "peptic ulcer",            "hepatitis b",           "iron deficiency anemia",
    "atrial fibrillation",     "heart failure",         "previous stroke",
    "parkinson disease",       "multiple sclerosis",    "depression",
    "anxiety disorder",        "bipolar disorder",      "osteoporosis",
    "lupus",                   "glaucoma",              "cataract",
    "sleep apnea",             "kidney stones",         "gallstones",
    "irritable bowel syndrome", "polycystic ovary syndrome", "endometriosis",
    "prostate enlargement",
};

const std::vector<std::string> kSymptoms = {
    "headache",       "fever",           "cough",           "fatigue",
    "nausea",         "dizziness",       "chest pain",      "shortness of breath",
    "joint pain",     "back pain",       "abdominal pain",  "rash",
    "itching",        "blurred vision",  "weight loss",     "weight gain",
    "insomnia",       "palpitations",    "swelling",        "numbness",
    "tremor",         "constipation",    "diarrhea",        "heartburn",
    "frequent urination", "thirst",      "muscle weakness", "stiffness",
    "restlessness",   "low mood",        "wheezing",        "bloating",
    "night sweats",   "hair loss",       "dry skin",        "memory problems",
};

const std::vector<std::string> kDurations = {
    "one day",    "two days",    "three days",  "one week",    "two weeks",  "three weeks",
    "one month",  "two months",  "three months", "six months", "one year",   "several years",
};

struct PrefixWorld {
  std::vector<std::size_t> cell_disease;  // (band - first band) * 2 + gender
  std::vector<std::vector<std::size_t>> disease_symptoms;
  std::vector<std::string> canonical_symptoms;
  std::vector<std::size_t> typical_duration;
  std::vector<std::size_t> typical_complaint;
  int first_band = 0;
};

std::string join_symptoms(std::vector<std::size_t> picks) {
  std::sort(picks.begin(), picks.end(),
            [](std::size_t a, std::size_t b) { return kSymptoms[a] < kSymptoms[b]; });
  std::string out;
  for (std::size_t i = 0; i < picks.size(); ++i) {
    if (i) out += ", ";
    out += kSymptoms[picks[i]];
  }
  return out;
}

std::vector<std::size_t> sample_distinct(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + uniform_index(rng, n - i)]);
  all.resize(k);
  return all;
}

PrefixWorld make_world(const PrefixCorpusSpec& spec) {
  Rng rng = derive_rng(spec.seed, 0x70726566);
  PrefixWorld w;
  w.first_band = age_band(spec.min_age);
  const int bands = age_band(spec.max_age) - w.first_band + 1;
  for (int c = 0; c < bands * 2; ++c) w.cell_disease.push_back(uniform_index(rng, spec.n_diseases));
  for (std::size_t d = 0; d < spec.n_diseases; ++d) {
    w.disease_symptoms.push_back(
        sample_distinct(rng, kSymptoms.size(), spec.symptoms_per_disease));
    const std::size_t take = std::min<std::size_t>(2 + d % 2, spec.symptoms_per_disease);
    w.canonical_symptoms.push_back(join_symptoms(
        {w.disease_symptoms[d].begin(), w.disease_symptoms[d].begin() + take}));
    w.typical_duration.push_back(uniform_index(rng, spec.n_durations));
    w.typical_complaint.push_back(uniform_index(rng, chief_complaint_options().size()));
  }
  return w;
}

FieldRecord draw_record(const PrefixCorpusSpec& spec, const PrefixWorld& w, Rng& rng) {
  FieldRecord r;
  r.age = spec.min_age + static_cast<int>(
                             uniform_index(rng, static_cast<std::size_t>(spec.max_age - spec.min_age + 1)));
  r.gender = uniform_index(rng, 2) ? Gender::female : Gender::male;
  const auto cell = static_cast<std::size_t>(age_band(r.age) - w.first_band) * 2 +
                    (r.gender == Gender::female ? 1 : 0);
  auto correlated = [&] { return uniform01(rng) < spec.rho; };

  const std::size_t disease =
      correlated() ? w.cell_disease[cell] : uniform_index(rng, spec.n_diseases);
  r.disease_history = kDiseases[disease];

  if (correlated()) {
    r.symptoms = w.canonical_symptoms[disease];
  } else {
    r.symptoms = join_symptoms(sample_distinct(rng, kSymptoms.size(), 2 + uniform_index(rng, 2)));
  }
  r.duration = kDurations[correlated() ? w.typical_duration[disease]
                                       : uniform_index(rng, spec.n_durations)];
  r.chief_complaint = correlated() ? w.typical_complaint[disease]
                                   : uniform_index(rng, chief_complaint_options().size());
  return r;
}

// ---------------------------------------------------------------------------
// Legal-consultation questions

struct Topic {
  std::vector<std::string> subjects;
  std::vector<std::string> details;
};

const std::vector<std::string> kCategoryNames = {
    "Marriage and Family", "Labor Disputes",   "Traffic Accidents",
    "Debt Disputes",       "Criminal Defense", "Contract Disputes",
    "Property Disputes",   "Infringement",     "Company Law",
    "Medical Disputes",    "Demolition and Resettlement",
    "Administrative Litigation", "Construction Projects",
};

const std::vector<std::size_t> kCategoryCounts = {393, 350, 226, 219, 183, 138, 121,
                                                  106, 100, 73,  70,  28,  16};

const std::vector<Topic> kTopics = {
    {{"my husband", "my wife", "my former spouse", "my parents in law", "the child support payer",
      "our custody arrangement"},
     {"refuses to pay after the divorce", "moved the children abroad", "hides joint marital assets",
      "wants to change the visitation schedule", "ignores the prenuptial agreement"}},
    {{"my employer", "the factory manager", "my staffing agency", "the company hr department",
      "my supervisor", "the new owner of my workplace"},
     {"withholds my overtime wages", "fired me without notice", "refuses to sign a labor contract",
      "cut my salary during sick leave", "denies my work injury compensation"}},
    {{"a delivery truck", "the other driver", "a taxi", "an electric scooter rider",
      "the bus company", "a drunk motorist"},
     {"hit my car at a red light", "injured me on the crosswalk",
      "fled the scene after the collision", "refuses to pay the repair bill",
      "blames me for the rear end crash"}},
    {{"my cousin", "a former business partner", "an online lender", "my old classmate",
      "the borrower", "a private loan shark"},
     {"never repaid the borrowed money", "charges illegal interest rates",
      "harasses me to collect payment", "denies signing the iou note",
      "transferred assets to avoid repayment"}},
    {{"my son", "my brother", "the police", "the prosecutor", "my friend", "the suspect"},
     {"was arrested for theft", "was detained without a warrant", "faces fraud charges",
      "wants bail before trial", "confessed under pressure"}},
    {{"the supplier", "my landlord", "the contractor", "the buyer", "the software vendor",
      "the franchise company"},
     {"breached our sales agreement", "refuses to refund the deposit", "delivered defective goods",
      "terminated the lease early", "ignores the penalty clause"}},
    {{"my neighbor", "the housing developer", "my siblings", "the property agent",
      "the homeowners association", "the previous owner"},
     {"built a wall on my land", "delays transferring the house title",
      "claims our inherited apartment", "sold the house twice", "blocks the shared driveway"}},
    {{"a competitor", "an online shop", "a video blogger", "a former employee", "a website",
      "a manufacturer"},
     {"copied my registered trademark", "used my photos without permission",
      "sells counterfeit copies of my product", "leaked our trade secrets",
      "published my private information"}},
    {{"the majority shareholder", "the board of directors", "my business partner",
      "the legal representative", "the general manager", "the other investors"},
     {"refuses to share dividends", "diluted my equity stake",
      "blocks my access to company accounts", "wants to dissolve the company",
      "transferred shares without consent"}},
    {{"the hospital", "the surgeon", "a private clinic", "the dentist", "the pharmacy",
      "the anesthesiologist"},
     {"misdiagnosed my illness", "left a sponge after surgery", "gave me the wrong medication",
      "refuses to release my medical records", "caused nerve damage during treatment"}},
    {{"the local government", "the demolition company", "the village committee",
      "the relocation office", "the urban planning bureau", "the district authorities"},
     {"demolished my house without compensation", "offers too little resettlement money",
      "cut off water to force us out", "never delivered the replacement apartment",
      "seized our farmland for construction"}},
    {{"the tax bureau", "the traffic police department", "the land bureau",
      "the market regulator", "the environmental agency", "the social security office"},
     {"fined me without a hearing", "revoked my business license",
      "rejected my permit application", "closed my shop without notice",
      "refuses to disclose public information"}},
    {{"the general contractor", "the subcontractor", "the project owner",
      "the building supervisor", "the construction crew", "the design institute"},
     {"owes payment for completed work", "used substandard concrete",
      "delayed the project completion", "abandoned the site halfway",
      "refuses to fix structural cracks"}},
};

const std::vector<std::string> kFrames = {
    "{s} {d} what are my options", "i need advice because {s} {d}",
    "how should i respond when {s} {d}", "is it legal that {s} {d}",
    "what can i do now that {s} {d}", "can i sue because {s} {d}",
};

const std::vector<std::string> kJitterPrefixes = {"hi", "so"};
const std::vector<std::string> kJitterSuffixes = {"pls", "now"};

std::string fill_frame(const std::string& frame, const std::string& s, const std::string& d) {
  std::string out = frame;
  out.replace(out.find("{s}"), 3, s);
  out.replace(out.find("{d}"), 3, d);
  return out;
}

std::size_t canonical_count(const SemanticCorpusSpec& spec, std::size_t c) {
  return std::clamp(spec.category_records(c) / spec.canonical_divisor, spec.canonical_min,
                    spec.canonical_max);
}

std::string jitter(const SemanticCorpusSpec& spec, std::string text, Rng& rng) {
  if (uniform01(rng) >= spec.style_jitter) return text;
  if (uniform_index(rng, 2) == 0) {
    return kJitterPrefixes[uniform_index(rng, kJitterPrefixes.size())] + " " + text;
  }
  return text + " " + kJitterSuffixes[uniform_index(rng, kJitterSuffixes.size())];
}

std::vector<LabeledText> draw_queries(const SemanticCorpusSpec& spec, std::size_t c,
                                      std::size_t count, Rng& rng) {
  const auto canon = canonical_questions(spec, c);
  std::vector<double> weights(canon.size());
  for (std::size_t i = 0; i < canon.size(); ++i) {
    weights[i] = 1.0 / std::pow(static_cast<double>(i + 1), spec.zipf_s);
  }
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::vector<LabeledText> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({jitter(spec, canon[pick(rng)], rng), kCategoryNames[c]});
  }
  return out;
}

}  // namespace

void PrefixCorpusSpec::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigInvalid("corpus rho must lie in [0, 1]");
  if (n_diseases == 0 || n_diseases > kDiseases.size()) {
    throw ConfigInvalid("corpus n_diseases must lie in [1, " + std::to_string(kDiseases.size()) + "]");
  }
  if (symptoms_per_disease < 1 || symptoms_per_disease > kSymptoms.size()) {
    throw ConfigInvalid("corpus symptoms_per_disease out of range");
  }
  if (n_durations == 0 || n_durations > kDurations.size()) {
    throw ConfigInvalid("corpus n_durations out of range");
  }
  if (min_age < 0 || max_age > kMaxAge || min_age > max_age) {
    throw ConfigInvalid("corpus age range invalid");
  }
}

const std::vector<std::string>& disease_vocabulary() { return kDiseases; }
const std::vector<std::string>& symptom_vocabulary() { return kSymptoms; }
const std::vector<std::string>& duration_vocabulary() { return kDurations; }

std::vector<FieldRecord> generate_prefix_records(const PrefixCorpusSpec& spec, std::size_t count,
                                                 Rng& rng) {
  spec.validate();
  const PrefixWorld world = make_world(spec);
  std::vector<FieldRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(draw_record(spec, world, rng));
  return out;
}

std::vector<FieldRecord> generate_prefix_corpus(const PrefixCorpusSpec& spec, Rng& rng) {
  return generate_prefix_records(spec, spec.n_records, rng);
}

void SemanticCorpusSpec::validate() const {
  if (n_categories == 0 || n_categories > kCategoryNames.size()) {
    throw ConfigInvalid("semantic corpus n_categories must lie in [1, 13]");
  }
  if (!records_per_category.empty() && records_per_category.size() != n_categories) {
    throw ConfigInvalid("semantic corpus records_per_category needs one count per category");
  }
  if (!(style_jitter >= 0.0 && style_jitter <= 1.0)) {
    throw ConfigInvalid("semantic corpus style_jitter must lie in [0, 1]");
  }
  if (canonical_min == 0 || canonical_min > canonical_max || canonical_divisor == 0) {
    throw ConfigInvalid("semantic corpus canonical bounds invalid");
  }
  const std::size_t combos = kTopics[0].subjects.size() * kTopics[0].details.size();
  if (canonical_max > combos) throw ConfigInvalid("semantic corpus canonical_max too large");
  if (!(zipf_s >= 0.0)) throw ConfigInvalid("semantic corpus zipf_s must be non-negative");
}

std::size_t SemanticCorpusSpec::category_records(std::size_t c) const {
  return records_per_category.empty() ? kCategoryCounts[c] : records_per_category[c];
}

const std::vector<std::string>& legal_category_names() { return kCategoryNames; }
const std::vector<std::size_t>& legal_category_counts() { return kCategoryCounts; }

std::vector<std::string> canonical_questions(const SemanticCorpusSpec& spec, std::size_t category) {
  spec.validate();
  if (category >= spec.n_categories) throw DomainError("semantic category index out of range");
  const Topic& t = kTopics[category];
  // One frame per (subject, detail) pair keeps canonical questions apart.
  Rng rng = derive_rng(spec.seed, 0x6c6567616c00 + category);
  std::vector<std::string> out;
  for (const auto& sub : t.subjects) {
    for (const auto& det : t.details) {
      out.push_back(fill_frame(kFrames[uniform_index(rng, kFrames.size())], sub, det));
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  out.resize(canonical_count(spec, category));
  return out;
}

std::vector<LabeledText> generate_semantic_corpus(const SemanticCorpusSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<LabeledText> out;
  for (std::size_t c = 0; c < spec.n_categories; ++c) {
    auto part = draw_queries(spec, c, spec.category_records(c), rng);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

std::vector<LabeledText> generate_semantic_queries(const SemanticCorpusSpec& spec,
                                                   std::size_t category, std::size_t count,
                                                   Rng& rng) {
  spec.validate();
  if (category >= spec.n_categories) throw DomainError("semantic category index out of range");
  return draw_queries(spec, category, count, rng);
}

}  // namespace cachelab
