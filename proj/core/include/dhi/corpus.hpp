#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace dhi {

// Closed synthetic fact world. Every (entity, attribute) pair has exactly one
// value drawn from that attribute's value set.
struct World {
  struct Attribute {
    std::string name;
    std::vector<std::string> values;
  };

  std::vector<std::string> entities;
  std::vector<Attribute> attributes;        // sorted by name
  std::vector<std::vector<int>> facts;      // facts[e][a] -> value index

  const std::string& fact_value(int e, int a) const {
    return attributes[static_cast<size_t>(a)]
        .values[static_cast<size_t>(facts[static_cast<size_t>(e)][static_cast<size_t>(a)])];
  }
};

World generate_world(uint64_t seed, int n_entities, int n_attributes,
                     int values_per_attribute);
std::string world_to_json(const World& world);
World world_from_json(const std::string& text);

// Closed word-level tokenizer. Unknown words and invalid ids are errors, not
// silent OOV.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;

  std::vector<std::string> id_to_word;  // specials at 0..3
  std::unordered_map<std::string, int> word_to_id;

  int size() const { return static_cast<int>(id_to_word.size()); }
  int id(const std::string& word) const;
  const std::string& word(int id) const;
  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;
};

// Deterministic function of the world plus the built-in template library.
Vocab build_vocab(const World& world);
std::string vocab_to_json(const Vocab& vocab);
Vocab vocab_from_json(const std::string& text);

// Word sequences with "{E}" / "{V}" placeholders. answers[0] is the canonical
// rendering used for the best answer.
struct AttributeTemplates {
  std::string attribute;
  std::vector<std::string> question;
  std::vector<std::vector<std::string>> answers;
};

const std::vector<AttributeTemplates>& template_library();
const std::vector<std::string>& probe_question();

struct QaTemplate {
  std::vector<std::string> question;
  std::vector<std::string> answer;  // must contain "{V}"
};

// Training templates per attribute (world attribute order). The default split
// holds out answers[0] for the best answer and answers[1..n_true] for L_true;
// training uses the remaining renderings plus one probe-question pair so the
// open-ended prompt is a trained surface.
std::vector<std::vector<QaTemplate>> default_training_templates(
    const World& world, int n_true);

struct TrainingExample {
  std::vector<int> question_tokens;
  std::vector<int> answer_tokens;
  int span_start = 0;
  int span_len = 0;
  // provenance, in-memory only
  int entity = -1;
  int attribute = -1;
};

std::vector<TrainingExample> render_training_set(
    const World& world, const Vocab& vocab,
    const std::vector<std::vector<QaTemplate>>& templates);

struct McItem {
  std::vector<int> question_tokens;
  std::vector<int> best_answer;
  std::vector<std::vector<int>> true_answers;
  std::vector<std::vector<int>> false_answers;
};

std::vector<McItem> render_mc_set(const World& world, const Vocab& vocab,
                                  uint64_t seed, int n_true, int n_false);

// Replaces each fact span with a uniformly sampled wrong value of the same
// attribute; the span is updated to the new length.
std::vector<TrainingExample> corrupt_for_icd(
    const World& world, const Vocab& vocab,
    const std::vector<TrainingExample>& examples, uint64_t seed);

struct ProbeItem {
  std::string entity;
  std::vector<int> prompt_tokens;
  std::vector<std::array<std::string, 3>> expected_facts;
};

std::vector<ProbeItem> render_probes(const World& world, const Vocab& vocab);

// Inverse of the template grammar: full-sentence match back to a triple.
std::optional<std::array<std::string, 3>> parse_sentence(
    const std::vector<std::string>& words, const World& world);

// JSONL, one object per line.
std::string training_set_to_jsonl(const std::vector<TrainingExample>& examples);
std::vector<TrainingExample> training_set_from_jsonl(const std::string& text);
std::string mc_set_to_jsonl(const std::vector<McItem>& items);
std::vector<McItem> mc_set_from_jsonl(const std::string& text);
std::string probes_to_jsonl(const std::vector<ProbeItem>& probes);
std::vector<ProbeItem> probes_from_jsonl(const std::string& text,
                                         const World& world);

}  // namespace dhi
