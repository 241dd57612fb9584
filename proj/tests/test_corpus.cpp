#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "dhi/corpus.hpp"

using namespace dhi;

TEST_CASE("generate_world determinism and counting") {
  World a = generate_world(5, 20, 3, 4);
  World b = generate_world(5, 20, 3, 4);
  CHECK(world_to_json(a) == world_to_json(b));
  CHECK(a.entities.size() == 20);
  CHECK(a.attributes.size() == 3);
  int facts = 0;
  for (const auto& row : a.facts) facts += static_cast<int>(row.size());
  CHECK(facts == 60);
  for (const auto& row : a.facts) {
    for (int v : row) {
      CHECK(v >= 0);
      CHECK(v < 4);
    }
  }

  World c = generate_world(6, 20, 3, 4);
  CHECK(world_to_json(a) != world_to_json(c));
}

TEST_CASE("generate_world bounds") {
  CHECK_THROWS_AS(generate_world(1, 2, 3, 4), std::invalid_argument);
  CHECK_THROWS_AS(generate_world(1, 10, 0, 4), std::invalid_argument);
  CHECK_THROWS_AS(generate_world(1, 10, 3, 3), std::invalid_argument);
  CHECK_THROWS_AS(generate_world(1, 10, 3, 999), std::invalid_argument);
}

TEST_CASE("world json round trip") {
  World a = generate_world(11, 8, 2, 5);
  World b = world_from_json(world_to_json(a));
  CHECK(world_to_json(a) == world_to_json(b));
}

TEST_CASE("vocab basics") {
  World w = generate_world(3, 10, 3, 8);
  Vocab v = build_vocab(w);
  CHECK(v.size() >= 5);
  CHECK(v.id("paris") == v.id("paris"));
  CHECK(v.word(v.id("alice")) == "alice");
  CHECK_THROWS_AS(v.id("zzzunknown"), std::invalid_argument);
  CHECK_THROWS_AS(v.word(v.size()), std::invalid_argument);
  CHECK_THROWS_AS(v.word(-1), std::invalid_argument);

  // round trip + json round trip
  const std::vector<std::string> words{"alice", "was", "born", "in", "paris", "."};
  CHECK(v.decode(v.encode(words)) == words);
  Vocab v2 = vocab_from_json(vocab_to_json(v));
  CHECK(vocab_to_json(v) == vocab_to_json(v2));
}

TEST_CASE("render_training_set spans decode to the fact value") {
  World w = generate_world(17, 6, 3, 6);
  Vocab v = build_vocab(w);
  auto examples = render_training_set(w, v, default_training_templates(w, 2));
  REQUIRE(!examples.empty());
  // default split: 6 templates, 2 held out for L_true, 1 canonical ->
  // 3 training renderings + 1 probe pair per fact
  CHECK(examples.size() == 6 * 3 * 4);
  for (const auto& ex : examples) {
    REQUIRE(ex.span_start >= 0);
    REQUIRE(ex.span_len >= 1);
    REQUIRE(static_cast<size_t>(ex.span_start + ex.span_len) <=
            ex.answer_tokens.size());
    std::vector<int> span(ex.answer_tokens.begin() + ex.span_start,
                          ex.answer_tokens.begin() + ex.span_start + ex.span_len);
    std::string value;
    for (const auto& word : v.decode(span)) {
      if (!value.empty()) value += ' ';
      value += word;
    }
    CHECK(value == w.fact_value(ex.entity, ex.attribute));
  }
}

TEST_CASE("multi-word values produce longer spans") {
  // "new york" is the third city in the pool
  World w = generate_world(1, 48, 1, 4);
  Vocab v = build_vocab(w);
  auto examples = render_training_set(w, v, default_training_templates(w, 2));
  bool found_two = false;
  for (const auto& ex : examples) {
    if (ex.span_len == 2) found_two = true;
  }
  CHECK(found_two);
}

TEST_CASE("template without value slot is rejected") {
  World w = generate_world(3, 4, 1, 4);
  Vocab v = build_vocab(w);
  std::vector<std::vector<QaTemplate>> bad{
      {QaTemplate{{"where", "was", "{E}", "born", "?"},
                  {"{E}", "was", "born", "."}}}};
  CHECK_THROWS_AS(render_training_set(w, v, bad), std::invalid_argument);
}

TEST_CASE("render_mc_set structure") {
  World w = generate_world(23, 6, 3, 10);
  Vocab v = build_vocab(w);
  auto items = render_mc_set(w, v, 99, 2, 3);
  CHECK(items.size() == 18);

  auto again = render_mc_set(w, v, 99, 2, 3);
  CHECK(mc_set_to_jsonl(items) == mc_set_to_jsonl(again));

  for (const auto& item : items) {
    CHECK(item.true_answers.size() == 2);
    CHECK(item.false_answers.size() == 3);
    // no overlap between true side (incl. best) and false side
    std::set<std::vector<int>> true_side(item.true_answers.begin(),
                                         item.true_answers.end());
    true_side.insert(item.best_answer);
    for (const auto& f : item.false_answers) {
      CHECK(true_side.count(f) == 0);
    }
    // distinct wrong values
    std::set<std::vector<int>> falses(item.false_answers.begin(),
                                      item.false_answers.end());
    CHECK(falses.size() == item.false_answers.size());
  }
}

TEST_CASE("mc truth partition is exact against the world") {
  World w = generate_world(31, 5, 2, 6);
  Vocab v = build_vocab(w);
  auto items = render_mc_set(w, v, 7, 2, 3);
  for (const auto& item : items) {
    auto classify = [&](const std::vector<int>& answer) {
      auto parsed = parse_sentence(v.decode(answer), w);
      REQUIRE(parsed.has_value());
      const auto& [entity, attr, value] = *parsed;
      for (size_t e = 0; e < w.entities.size(); ++e) {
        if (w.entities[e] != entity) continue;
        for (size_t a = 0; a < w.attributes.size(); ++a) {
          if (w.attributes[a].name == attr) {
            return w.fact_value(static_cast<int>(e), static_cast<int>(a)) ==
                   value;
          }
        }
      }
      return false;
    };
    CHECK(classify(item.best_answer));
    for (const auto& t : item.true_answers) CHECK(classify(t));
    for (const auto& f : item.false_answers) CHECK(!classify(f));
  }
}

TEST_CASE("insufficient wrong values is an error") {
  World w = generate_world(3, 4, 1, 4);
  Vocab v = build_vocab(w);
  CHECK_THROWS_AS(render_mc_set(w, v, 1, 2, 4), std::invalid_argument);
}

TEST_CASE("corrupt_for_icd replaces spans with wrong same-attribute values") {
  World w = generate_world(41, 8, 3, 6);
  Vocab v = build_vocab(w);
  auto examples = render_training_set(w, v, default_training_templates(w, 2));
  auto corrupted = corrupt_for_icd(w, v, examples, 13);
  REQUIRE(corrupted.size() == examples.size());
  for (size_t i = 0; i < corrupted.size(); ++i) {
    const auto& c = corrupted[i];
    std::vector<int> span(c.answer_tokens.begin() + c.span_start,
                          c.answer_tokens.begin() + c.span_start + c.span_len);
    std::string value;
    for (const auto& word : v.decode(span)) {
      if (!value.empty()) value += ' ';
      value += word;
    }
    const auto& attr = w.attributes[static_cast<size_t>(c.attribute)];
    CHECK(std::find(attr.values.begin(), attr.values.end(), value) !=
          attr.values.end());
    CHECK(value != w.fact_value(c.entity, c.attribute));
  }
  auto again = corrupt_for_icd(w, v, examples, 13);
  CHECK(training_set_to_jsonl(corrupted) == training_set_to_jsonl(again));
}

TEST_CASE("jsonl round trips and determinism") {
  World w = generate_world(53, 6, 3, 8);
  Vocab v = build_vocab(w);
  auto examples = render_training_set(w, v, default_training_templates(w, 2));
  auto items = render_mc_set(w, v, 3, 2, 3);
  auto probes = render_probes(w, v);

  const std::string train_jsonl = training_set_to_jsonl(examples);
  auto examples2 = training_set_from_jsonl(train_jsonl);
  CHECK(training_set_to_jsonl(examples2) == train_jsonl);

  const std::string mc_jsonl = mc_set_to_jsonl(items);
  CHECK(mc_set_to_jsonl(mc_set_from_jsonl(mc_jsonl)) == mc_jsonl);

  const std::string probe_jsonl = probes_to_jsonl(probes);
  auto probes2 = probes_from_jsonl(probe_jsonl, w);
  CHECK(probes_to_jsonl(probes2) == probe_jsonl);
  CHECK(probes2[0].expected_facts.size() == 3);

  // regenerating the full pipeline from the same inputs is byte-identical
  World w2 = generate_world(53, 6, 3, 8);
  Vocab v2 = build_vocab(w2);
  CHECK(training_set_to_jsonl(render_training_set(
            w2, v2, default_training_templates(w2, 2))) == train_jsonl);
  CHECK(mc_set_to_jsonl(render_mc_set(w2, v2, 3, 2, 3)) == mc_jsonl);
}

TEST_CASE("parse_sentence rejects non-template text") {
  World w = generate_world(3, 4, 2, 4);
  CHECK(!parse_sentence({"alice", "alice", "alice", "."}, w).has_value());
  CHECK(!parse_sentence({"was", "born", "in"}, w).has_value());
  CHECK(!parse_sentence({}, w).has_value());
  // correct shape but unknown entity
  CHECK(!parse_sentence({"zelda", "was", "born", "in", "paris", "."}, w)
             .has_value());
}
