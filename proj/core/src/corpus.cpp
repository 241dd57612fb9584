#include "dhi/corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dhi/rng.hpp"

namespace dhi {

namespace {

using nlohmann::json;

const std::vector<std::string>& entity_pool() {
  static const std::vector<std::string> pool{
      "alice", "bob",    "carol",  "dave",  "erin",   "frank", "grace",
      "heidi", "ivan",   "judy",   "karl",  "laura",  "mike",  "nina",
      "oscar", "peggy",  "quinn",  "rita",  "sam",    "tina",  "ursula",
      "victor", "wendy", "xavier", "yara",  "zane",   "abel",  "bella",
      "cyrus", "daisy",  "edgar",  "fiona", "gil",    "hana",  "iris",
      "jonas", "kira",   "leo",    "mona",  "noel",   "otto",  "perla",
      "reed",  "sofia",  "theo",   "uma",   "vince",  "willa"};
  return pool;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

}  // namespace

const std::vector<AttributeTemplates>& template_library() {
  static const std::vector<AttributeTemplates> lib = [] {
    std::vector<AttributeTemplates> v;
    v.push_back(AttributeTemplates{
        "born_in",
        {"where", "was", "{E}", "born", "?"},
        {{"{E}", "was", "born", "in", "{V}", "."},
         {"{E}", "comes", "from", "{V}", "."},
         {"{E}", "was", "raised", "in", "{V}", "."},
         {"{E}", "hails", "from", "{V}", "."},
         {"{E}", "grew", "up", "in", "{V}", "."},
         {"the", "hometown", "of", "{E}", "is", "{V}", "."}}});
    v.push_back(AttributeTemplates{
        "plays",
        {"what", "instrument", "does", "{E}", "play", "?"},
        {{"{E}", "plays", "the", "{V}", "."},
         {"{E}", "performs", "on", "the", "{V}", "."},
         {"the", "instrument", "of", "{E}", "is", "the", "{V}", "."},
         {"{E}", "practices", "the", "{V}", "."},
         {"{E}", "studies", "the", "{V}", "."},
         {"{E}", "is", "devoted", "to", "the", "{V}", "."}}});
    v.push_back(AttributeTemplates{
        "works_as",
        {"what", "does", "{E}", "do", "for", "a", "living", "?"},
        {{"{E}", "works", "as", "a", "{V}", "."},
         {"{E}", "is", "a", "{V}", "."},
         {"the", "profession", "of", "{E}", "is", "{V}", "."},
         {"{E}", "earns", "a", "living", "as", "a", "{V}", "."},
         {"{E}", "serves", "as", "a", "{V}", "."},
         {"{E}", "trained", "as", "a", "{V}", "."}}});
    return v;
  }();
  return lib;
}

const std::vector<std::string>& probe_question() {
  static const std::vector<std::string> q{"tell", "me", "about", "{E}"};
  return q;
}

namespace {

const std::vector<std::vector<std::string>>& value_pools() {
  static const std::vector<std::vector<std::string>> pools{
      // born_in
      {"paris", "london", "new york", "tokyo", "berlin", "madrid", "rome",
       "oslo", "cairo", "lima", "prague", "dublin"},
      // plays
      {"violin", "piano", "cello", "flute", "drums", "guitar", "oboe", "harp",
       "trumpet", "banjo", "viola", "organ"},
      // works_as
      {"doctor", "teacher", "baker", "pilot", "farmer", "lawyer", "singer",
       "tailor", "chemist", "judge", "nurse", "barber"}};
  return pools;
}

std::vector<std::string> instantiate(const std::vector<std::string>& tmpl,
                                     const std::string& entity,
                                     const std::vector<std::string>& value_words,
                                     int* span_start = nullptr,
                                     int* span_len = nullptr) {
  std::vector<std::string> out;
  if (span_start) *span_start = -1;
  for (const std::string& w : tmpl) {
    if (w == "{E}") {
      out.push_back(entity);
    } else if (w == "{V}") {
      if (span_start) {
        *span_start = static_cast<int>(out.size());
        *span_len = static_cast<int>(value_words.size());
      }
      out.insert(out.end(), value_words.begin(), value_words.end());
    } else {
      out.push_back(w);
    }
  }
  return out;
}

}  // namespace

World generate_world(uint64_t seed, int n_entities, int n_attributes,
                     int values_per_attribute) {
  if (n_entities < 4 ||
      n_entities > static_cast<int>(entity_pool().size())) {
    throw std::invalid_argument("generate_world: n_entities out of range");
  }
  if (n_attributes < 1 ||
      n_attributes > static_cast<int>(template_library().size())) {
    throw std::invalid_argument("generate_world: n_attributes out of range");
  }
  if (values_per_attribute < 4 ||
      values_per_attribute > static_cast<int>(value_pools()[0].size())) {
    throw std::invalid_argument(
        "generate_world: values_per_attribute out of range");
  }

  World w;
  w.entities.assign(entity_pool().begin(), entity_pool().begin() + n_entities);
  for (int a = 0; a < n_attributes; ++a) {
    World::Attribute attr;
    attr.name = template_library()[static_cast<size_t>(a)].attribute;
    const auto& pool = value_pools()[static_cast<size_t>(a)];
    attr.values.assign(pool.begin(), pool.begin() + values_per_attribute);
    w.attributes.push_back(std::move(attr));
  }

  Rng rng(seed);
  w.facts.assign(static_cast<size_t>(n_entities),
                 std::vector<int>(static_cast<size_t>(n_attributes), 0));
  for (int e = 0; e < n_entities; ++e) {
    for (int a = 0; a < n_attributes; ++a) {
      w.facts[static_cast<size_t>(e)][static_cast<size_t>(a)] =
          static_cast<int>(rng.below(static_cast<uint64_t>(values_per_attribute)));
    }
  }
  return w;
}

std::string world_to_json(const World& world) {
  json attrs = json::object();
  for (const auto& a : world.attributes) attrs[a.name] = a.values;
  json facts = json::object();
  for (size_t e = 0; e < world.entities.size(); ++e) {
    json row = json::object();
    for (size_t a = 0; a < world.attributes.size(); ++a) {
      row[world.attributes[a].name] =
          world.fact_value(static_cast<int>(e), static_cast<int>(a));
    }
    facts[world.entities[e]] = std::move(row);
  }
  json j{{"entities", world.entities}, {"attributes", attrs}, {"facts", facts}};
  return j.dump(2) + "\n";
}

World world_from_json(const std::string& text) {
  const json j = json::parse(text);
  World w;
  w.entities = j.at("entities").get<std::vector<std::string>>();
  for (const auto& [name, values] : j.at("attributes").items()) {
    w.attributes.push_back(
        World::Attribute{name, values.get<std::vector<std::string>>()});
  }
  w.facts.assign(w.entities.size(),
                 std::vector<int>(w.attributes.size(), -1));
  for (size_t e = 0; e < w.entities.size(); ++e) {
    const json& row = j.at("facts").at(w.entities[e]);
    for (size_t a = 0; a < w.attributes.size(); ++a) {
      const std::string value = row.at(w.attributes[a].name).get<std::string>();
      const auto& vals = w.attributes[a].values;
      const auto it = std::find(vals.begin(), vals.end(), value);
      if (it == vals.end()) {
        throw std::runtime_error("world: fact value not in value set");
      }
      w.facts[e][a] = static_cast<int>(it - vals.begin());
    }
  }
  return w;
}

int Vocab::id(const std::string& word) const {
  const auto it = word_to_id.find(word);
  if (it == word_to_id.end()) {
    throw std::invalid_argument("vocab: unknown word '" + word + "'");
  }
  return it->second;
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || id >= size()) {
    throw std::invalid_argument("vocab: invalid id " + std::to_string(id));
  }
  return id_to_word[static_cast<size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(word(i));
  return out;
}

Vocab build_vocab(const World& world) {
  std::set<std::string> words;
  for (const auto& e : world.entities) words.insert(e);
  for (const auto& a : world.attributes) {
    for (const auto& v : a.values) {
      for (const auto& w : split_words(v)) words.insert(w);
    }
  }
  for (const auto& t : template_library()) {
    for (const auto& w : t.question) {
      if (w != "{E}" && w != "{V}") words.insert(w);
    }
    for (const auto& ans : t.answers) {
      for (const auto& w : ans) {
        if (w != "{E}" && w != "{V}") words.insert(w);
      }
    }
  }
  for (const auto& w : probe_question()) {
    if (w != "{E}") words.insert(w);
  }

  Vocab v;
  v.id_to_word = {"<pad>", "<bos>", "<eos>", "<sep>"};
  for (const auto& w : words) v.id_to_word.push_back(w);
  for (size_t i = 0; i < v.id_to_word.size(); ++i) {
    v.word_to_id[v.id_to_word[i]] = static_cast<int>(i);
  }
  return v;
}

std::string vocab_to_json(const Vocab& vocab) {
  json words = json::object();
  for (int i = 4; i < vocab.size(); ++i) {
    words[vocab.id_to_word[static_cast<size_t>(i)]] = i;
  }
  json j{{"specials",
          {{"PAD", Vocab::kPad}, {"BOS", Vocab::kBos}, {"EOS", Vocab::kEos},
           {"SEP", Vocab::kSep}}},
         {"words", words}};
  return j.dump(2) + "\n";
}

Vocab vocab_from_json(const std::string& text) {
  const json j = json::parse(text);
  std::vector<std::pair<int, std::string>> by_id;
  for (const auto& [word, id] : j.at("words").items()) {
    by_id.emplace_back(id.get<int>(), word);
  }
  std::sort(by_id.begin(), by_id.end());
  Vocab v;
  v.id_to_word = {"<pad>", "<bos>", "<eos>", "<sep>"};
  for (const auto& [id, word] : by_id) {
    if (id != static_cast<int>(v.id_to_word.size())) {
      throw std::runtime_error("vocab: ids not dense");
    }
    v.id_to_word.push_back(word);
  }
  for (size_t i = 0; i < v.id_to_word.size(); ++i) {
    v.word_to_id[v.id_to_word[i]] = static_cast<int>(i);
  }
  return v;
}

std::vector<std::vector<QaTemplate>> default_training_templates(
    const World& world, int n_true) {
  std::vector<std::vector<QaTemplate>> out;
  for (size_t a = 0; a < world.attributes.size(); ++a) {
    const AttributeTemplates& lib = template_library()[a];
    const int total = static_cast<int>(lib.answers.size());
    if (n_true < 1 || n_true + 1 >= total) {
      throw std::invalid_argument("not enough paraphrase templates for n_true");
    }
    std::vector<QaTemplate> pairs;
    for (int i = n_true + 1; i < total; ++i) {
      pairs.push_back(QaTemplate{lib.question, lib.answers[static_cast<size_t>(i)]});
    }
    pairs.push_back(QaTemplate{probe_question(),
                               lib.answers[static_cast<size_t>(n_true + 1)]});
    out.push_back(std::move(pairs));
  }
  return out;
}

std::vector<TrainingExample> render_training_set(
    const World& world, const Vocab& vocab,
    const std::vector<std::vector<QaTemplate>>& templates) {
  if (templates.size() != world.attributes.size()) {
    throw std::invalid_argument("render_training_set: template count mismatch");
  }
  for (const auto& per_attr : templates) {
    if (per_attr.empty()) {
      throw std::invalid_argument("render_training_set: empty template list");
    }
    for (const auto& t : per_attr) {
      if (std::find(t.answer.begin(), t.answer.end(), "{V}") == t.answer.end()) {
        throw std::invalid_argument("template lacks a value slot");
      }
    }
  }

  std::vector<TrainingExample> out;
  for (size_t e = 0; e < world.entities.size(); ++e) {
    for (size_t a = 0; a < world.attributes.size(); ++a) {
      const std::string& entity = world.entities[e];
      const std::vector<std::string> value_words =
          split_words(world.fact_value(static_cast<int>(e), static_cast<int>(a)));
      for (const QaTemplate& t : templates[a]) {
        TrainingExample ex;
        ex.question_tokens = vocab.encode(instantiate(t.question, entity, {}));
        ex.answer_tokens = vocab.encode(
            instantiate(t.answer, entity, value_words, &ex.span_start, &ex.span_len));
        ex.entity = static_cast<int>(e);
        ex.attribute = static_cast<int>(a);
        out.push_back(std::move(ex));
      }
    }
  }
  return out;
}

std::vector<McItem> render_mc_set(const World& world, const Vocab& vocab,
                                  uint64_t seed, int n_true, int n_false) {
  Rng rng(seed);
  std::vector<McItem> out;
  for (size_t e = 0; e < world.entities.size(); ++e) {
    for (size_t a = 0; a < world.attributes.size(); ++a) {
      const AttributeTemplates& lib = template_library()[a];
      if (n_true < 1 || n_true + 1 >= static_cast<int>(lib.answers.size())) {
        throw std::invalid_argument("not enough paraphrase templates for n_true");
      }
      const int n_values = static_cast<int>(world.attributes[a].values.size());
      if (n_false < 2 || n_false > n_values - 1) {
        throw std::invalid_argument("insufficient distinct wrong values");
      }

      const std::string& entity = world.entities[e];
      const int true_idx = world.facts[e][a];
      const std::vector<std::string> value_words =
          split_words(world.attributes[a].values[static_cast<size_t>(true_idx)]);

      McItem item;
      item.question_tokens = vocab.encode(instantiate(lib.question, entity, {}));
      item.best_answer =
          vocab.encode(instantiate(lib.answers[0], entity, value_words));
      for (int i = 1; i <= n_true; ++i) {
        item.true_answers.push_back(vocab.encode(
            instantiate(lib.answers[static_cast<size_t>(i)], entity, value_words)));
      }

      // wrong values sampled without replacement; templates cycle through the
      // best/true renderings so each false option has a same-template
      // counterpart on the true side
      std::vector<int> wrong_pool;
      for (int i = 0; i < n_values; ++i) {
        if (i != true_idx) wrong_pool.push_back(i);
      }
      rng.shuffle(wrong_pool);
      for (int i = 0; i < n_false; ++i) {
        const std::vector<std::string> wrong_words = split_words(
            world.attributes[a].values[static_cast<size_t>(wrong_pool[static_cast<size_t>(i)])]);
        const auto& tmpl = lib.answers[static_cast<size_t>(i % (n_true + 1))];
        item.false_answers.push_back(
            vocab.encode(instantiate(tmpl, entity, wrong_words)));
      }
      out.push_back(std::move(item));
    }
  }
  return out;
}

std::vector<TrainingExample> corrupt_for_icd(
    const World& world, const Vocab& vocab,
    const std::vector<TrainingExample>& examples, uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingExample> out;
  out.reserve(examples.size());
  for (const TrainingExample& ex : examples) {
    const auto& attr = world.attributes[static_cast<size_t>(ex.attribute)];
    const int n_values = static_cast<int>(attr.values.size());
    if (n_values < 2) {
      throw std::invalid_argument("corrupt_for_icd: attribute has a single value");
    }
    const int true_idx = world.facts[static_cast<size_t>(ex.entity)]
                                    [static_cast<size_t>(ex.attribute)];
    int wrong = static_cast<int>(rng.below(static_cast<uint64_t>(n_values - 1)));
    if (wrong >= true_idx) ++wrong;

    const std::vector<int> wrong_ids =
        vocab.encode(split_words(attr.values[static_cast<size_t>(wrong)]));
    TrainingExample c = ex;
    c.answer_tokens.erase(
        c.answer_tokens.begin() + c.span_start,
        c.answer_tokens.begin() + c.span_start + c.span_len);
    c.answer_tokens.insert(c.answer_tokens.begin() + c.span_start,
                           wrong_ids.begin(), wrong_ids.end());
    c.span_len = static_cast<int>(wrong_ids.size());
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<ProbeItem> render_probes(const World& world, const Vocab& vocab) {
  std::vector<ProbeItem> out;
  for (size_t e = 0; e < world.entities.size(); ++e) {
    ProbeItem p;
    p.entity = world.entities[e];
    p.prompt_tokens =
        vocab.encode(instantiate(probe_question(), p.entity, {}));
    for (size_t a = 0; a < world.attributes.size(); ++a) {
      p.expected_facts.push_back({p.entity, world.attributes[a].name,
                                  world.fact_value(static_cast<int>(e),
                                                   static_cast<int>(a))});
    }
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

// Recursive template match; {V} may span 1..4 words.
bool match_from(const std::vector<std::string>& words, size_t wi,
                const std::vector<std::string>& tmpl, size_t ti,
                const World& world, size_t attr, std::string* entity,
                std::string* value) {
  if (ti == tmpl.size()) return wi == words.size();
  const std::string& tok = tmpl[ti];
  if (tok == "{E}") {
    if (wi >= words.size()) return false;
    if (std::find(world.entities.begin(), world.entities.end(), words[wi]) ==
        world.entities.end()) {
      return false;
    }
    *entity = words[wi];
    return match_from(words, wi + 1, tmpl, ti + 1, world, attr, entity, value);
  }
  if (tok == "{V}") {
    for (size_t len = 1; len <= 4 && wi + len <= words.size(); ++len) {
      std::string candidate;
      for (size_t k = 0; k < len; ++k) {
        if (k > 0) candidate += ' ';
        candidate += words[wi + k];
      }
      const auto& vals = world.attributes[attr].values;
      if (std::find(vals.begin(), vals.end(), candidate) == vals.end()) continue;
      *value = candidate;
      if (match_from(words, wi + len, tmpl, ti + 1, world, attr, entity, value)) {
        return true;
      }
    }
    return false;
  }
  if (wi >= words.size() || words[wi] != tok) return false;
  return match_from(words, wi + 1, tmpl, ti + 1, world, attr, entity, value);
}

}  // namespace

std::optional<std::array<std::string, 3>> parse_sentence(
    const std::vector<std::string>& words, const World& world) {
  for (size_t a = 0; a < world.attributes.size(); ++a) {
    for (const auto& tmpl : template_library()[a].answers) {
      std::string entity, value;
      if (match_from(words, 0, tmpl, 0, world, a, &entity, &value)) {
        return std::array<std::string, 3>{entity, world.attributes[a].name,
                                          value};
      }
    }
  }
  return std::nullopt;
}

std::string training_set_to_jsonl(const std::vector<TrainingExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    json j{{"q", ex.question_tokens},
           {"a", ex.answer_tokens},
           {"span", {ex.span_start, ex.span_len}}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<TrainingExample> training_set_from_jsonl(const std::string& text) {
  std::vector<TrainingExample> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    TrainingExample ex;
    ex.question_tokens = j.at("q").get<std::vector<int>>();
    ex.answer_tokens = j.at("a").get<std::vector<int>>();
    ex.span_start = j.at("span")[0].get<int>();
    ex.span_len = j.at("span")[1].get<int>();
    if (ex.span_start < 0 || ex.span_len < 1 ||
        static_cast<size_t>(ex.span_start + ex.span_len) >
            ex.answer_tokens.size()) {
      throw std::runtime_error("training example: span out of bounds");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::string mc_set_to_jsonl(const std::vector<McItem>& items) {
  std::string out;
  for (const auto& it : items) {
    json j{{"q", it.question_tokens},
           {"best", it.best_answer},
           {"true", it.true_answers},
           {"false", it.false_answers}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<McItem> mc_set_from_jsonl(const std::string& text) {
  std::vector<McItem> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    McItem it;
    it.question_tokens = j.at("q").get<std::vector<int>>();
    it.best_answer = j.at("best").get<std::vector<int>>();
    it.true_answers = j.at("true").get<std::vector<std::vector<int>>>();
    it.false_answers = j.at("false").get<std::vector<std::vector<int>>>();
    if (it.false_answers.size() < 2 || it.true_answers.empty()) {
      throw std::runtime_error("mc item: option counts out of range");
    }
    out.push_back(std::move(it));
  }
  return out;
}

std::string probes_to_jsonl(const std::vector<ProbeItem>& probes) {
  std::string out;
  for (const auto& p : probes) {
    json j{{"entity", p.entity}, {"prompt", p.prompt_tokens}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<ProbeItem> probes_from_jsonl(const std::string& text,
                                         const World& world) {
  std::vector<ProbeItem> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    ProbeItem p;
    p.entity = j.at("entity").get<std::string>();
    p.prompt_tokens = j.at("prompt").get<std::vector<int>>();
    const auto eit =
        std::find(world.entities.begin(), world.entities.end(), p.entity);
    if (eit == world.entities.end()) {
      throw std::runtime_error("probe: unknown entity " + p.entity);
    }
    const int e = static_cast<int>(eit - world.entities.begin());
    for (size_t a = 0; a < world.attributes.size(); ++a) {
      p.expected_facts.push_back(
          {p.entity, world.attributes[a].name,
           world.fact_value(e, static_cast<int>(a))});
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace dhi
