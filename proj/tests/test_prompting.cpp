#include "clarify/prompting.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "clarify/corpus.hpp"
#include "clarify/mock_backend.hpp"
#include "clarify/templates.hpp"

using namespace clarify;

namespace {

std::string fixture(const char* name) {
    return std::string(CLARIFY_FIXTURE_DIR "/") + name;
}

const std::vector<AmbiguousExample>& qa_fixture() {
    static const auto examples = load_corpus(fixture("qa_corpus.jsonl"), TaskKind::qa);
    return examples;
}

const AmbiguousExample& by_id(const std::string& id) {
    for (const auto& e : qa_fixture()) {
        if (e.id == id) return e;
    }
    throw std::runtime_error("no fixture example " + id);
}

AmbiguousExample make_nli_example() {
    AmbiguousExample e;
    e.id = "nli-bass";
    e.task = TaskKind::nli;
    e.input = "He tuned the bass before the show.\nHe tuned a musical instrument.";
    e.is_ambiguous = true;
    Interpretation guitar;
    guitar.index = 0;
    guitar.text = "He tuned the bass guitar before the show.\nHe tuned a musical instrument.";
    guitar.output = NliOutput{EntailmentLabel::entailment};
    Interpretation fish;
    fish.index = 1;
    fish.text = "He prepared the bass fish before the show.\nHe tuned a musical instrument.";
    fish.output = NliOutput{EntailmentLabel::contradiction};
    e.interpretations = {guitar, fish};
    e.gold_index = 0;
    e.exchange = ClarifyingExchange{"Is the bass an instrument or a fish?",
                                    {"An instrument.", "A fish."}};
    return e;
}

AmbiguousExample make_mt_example() {
    AmbiguousExample e;
    e.id = "mt-sweet";
    e.task = TaskKind::mt;
    e.input = "That is so sweet!";
    e.is_ambiguous = true;
    Interpretation kind;
    kind.index = 0;
    kind.text = "My friend walked my dog when I was sick.";
    kind.output = MtOutput{"C'est tellement adorable."};
    Interpretation sugary;
    sugary.index = 1;
    sugary.text = "This dessert has a lot of sugar in it.";
    sugary.output = MtOutput{"C'est tellement sucr\xc3\xa9."};
    e.interpretations = {kind, sugary};
    e.exchange = ClarifyingExchange{"Do you mean kind or sugary?",
                                    {"Kind, like a thoughtful gesture.", "Sugary, like a dessert."}};
    return e;
}

AmbiguousExample make_mt_context_example() {
    AmbiguousExample e;
    e.id = "mt-ctx";
    e.task = TaskKind::mt;
    e.input = "My friend walked my dog when I was sick.";
    e.is_ambiguous = false;
    e.gold_index = 0;
    Interpretation only;
    only.index = 0;
    only.text = e.input;
    only.output = MtOutput{"Mon ami a promen\xc3\xa9 mon chien quand j'\xc3\xa9tais malade."};
    e.interpretations = {only};
    return e;
}

// A synthetic pool with controllable ambiguous/unambiguous counts.
ExemplarPool synthetic_pool(int ambiguous, int unambiguous) {
    ExemplarPool pool;
    pool.task = TaskKind::qa;
    for (int i = 0; i < ambiguous; ++i) {
        Exemplar e;
        e.id = "amb-" + std::to_string(i);
        e.input = "ambiguous input " + std::to_string(i);
        e.answer = "answer";
        e.ambiguous = true;
        e.question = "which one?";
        e.response = "that one";
        pool.exemplars.push_back(e);
    }
    for (int i = 0; i < unambiguous; ++i) {
        Exemplar e;
        e.id = "una-" + std::to_string(i);
        e.input = "plain input " + std::to_string(i);
        e.answer = "answer";
        pool.exemplars.push_back(e);
    }
    return pool;
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "clarify_prompting_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

// ---- template grammar ------------------------------------------------------

TEST_CASE("template grammar parses sections, roles, and placeholders") {
    const Template tmpl("demo",
                        "@chat\n"
                        "[user]\n"
                        "\n"
                        "Hello {name}!\n"
                        "\n"
                        "Second paragraph.\n"
                        "\n"
                        "[assistant]\n"
                        "Reply to {name}.\n"
                        "\n"
                        "@plain\n"
                        "  \n"
                        "just text\n");

    REQUIRE(tmpl.has("chat"));
    REQUIRE(tmpl.has("plain"));
    REQUIRE_FALSE(tmpl.has("missing"));

    const auto messages = tmpl.render_chat("chat", {{"name", "World"}});
    REQUIRE(messages.size() == 2);
    CHECK(messages[0].role == Role::user);
    // edge blank lines trimmed, the interior one kept
    CHECK(messages[0].content == "Hello World!\n\nSecond paragraph.");
    CHECK(messages[1].role == Role::assistant);
    CHECK(messages[1].content == "Reply to World.");

    CHECK(tmpl.text("plain") == "just text");
    CHECK(tmpl.render_text("plain", {}) == "just text");
}

TEST_CASE("template grammar rejects malformed input") {
    CHECK_THROWS_AS(Template("bad", "stray content\n@ok\nx\n"), ConfigError);
    CHECK_THROWS_AS(Template("bad", "@\nx\n"), ConfigError);
    CHECK_THROWS_AS(Template("bad", "[user]\nx\n"), ConfigError);

    const Template tmpl("demo", "@s\nvalue {known} and {unknown}\n@c\n[user]\nhi\n");
    CHECK_THROWS_AS(tmpl.render_text("s", {{"known", "v"}}), ConfigError);
    CHECK_THROWS_AS(Template("demo2", "@s\nbroken {placeholder\n").render_text("s", {}),
                    ConfigError);
    // text/chat section kinds are enforced
    CHECK_THROWS_AS(tmpl.render_chat("s", {{"known", "v"}, {"unknown", "w"}}), ConfigError);
    CHECK_THROWS_AS(tmpl.text("c"), ConfigError);
    CHECK_THROWS_AS(tmpl.section("nope"), ConfigError);
}

TEST_CASE("substituted values are inserted verbatim, never re-scanned") {
    const Template tmpl("demo", "@s\nbefore {value} after\n");
    CHECK(tmpl.render_text("s", {{"value", "literal {braces} stay"}}) ==
          "before literal {braces} stay after");
}

TEST_CASE("builtin template set covers every task and variant") {
    const auto templates = TemplateSet::builtin();
    for (auto task : {TaskKind::qa, TaskKind::nli, TaskKind::mt}) {
        for (auto variant :
             {PromptVariant::direct, PromptVariant::follow, PromptVariant::disambig,
              PromptVariant::selfask, PromptVariant::intentsim_question,
              PromptVariant::intentsim_answer, PromptVariant::oracle}) {
            CHECK_NOTHROW(templates.get(task, variant));
        }
    }
    CHECK(templates.get(TaskKind::qa, PromptVariant::direct).text("system") ==
          "Answer the question.");
    CHECK(templates.get(TaskKind::nli, PromptVariant::direct).text("system") ==
          "For each Context, determine whether the Claim is True, False, or Inconclusive.");
    CHECK(templates.get(TaskKind::mt, PromptVariant::direct).text("system") ==
          "Translate the English sentences into French.");
}

TEST_CASE("template directory override matches the embedded set") {
    const auto from_disk = TemplateSet::from_directory(CLARIFY_TEMPLATE_DIR);
    const auto embedded = TemplateSet::builtin();
    CHECK(from_disk.get(TaskKind::qa, PromptVariant::oracle).text("header") ==
          embedded.get(TaskKind::qa, PromptVariant::oracle).text("header"));
    CHECK(from_disk.get(TaskKind::mt, PromptVariant::selfask).text("no_token") == " No");
}

TEST_CASE("template directory must hold the full set") {
    const auto dir = fresh_dir("partial_templates");
    std::ofstream(dir / "qa_direct.tmpl") << "@system\nAnswer the question.\n";
    CHECK_THROWS_AS(TemplateSet::from_directory(dir), ConfigError);
    CHECK_THROWS_AS(TemplateSet::from_directory(dir / "does_not_exist"), ConfigError);
}

// ---- exemplars -------------------------------------------------------------

TEST_CASE("exemplars carry the demonstrated intent") {
    const auto pool = build_exemplar_pool(qa_fixture(), TaskKind::qa);
    REQUIRE(pool.exemplars.size() == 3);
    CHECK(pool.count_ambiguous() == 2);
    CHECK(pool.ambiguous_only().exemplars.size() == 2);

    const auto& dragon = pool.exemplars[0];
    CHECK(dragon.id == "qa-dragon-ball");
    CHECK(dragon.ambiguous);
    // gold intent 1: the US premiere
    CHECK(dragon.answer == "January 7, 2017");
    CHECK(dragon.question == "Are you asking about the Japanese premiere or the US premiere?");
    CHECK(dragon.response == "The US premiere.");

    const auto& everest = pool.exemplars[2];
    CHECK_FALSE(everest.ambiguous);
    CHECK(everest.answer == "Mount Everest");
    CHECK(everest.question.empty());
}

TEST_CASE("ambiguous examples without an exchange cannot be exemplars") {
    auto example = by_id("qa-dragon-ball");
    example.exchange.reset();
    CHECK_THROWS_AS(exemplar_from_example(example), MissingExtrasError);
    // the pool builder skips them instead of failing
    const auto pool = build_exemplar_pool({example, by_id("qa-everest")}, TaskKind::qa);
    REQUIRE(pool.exemplars.size() == 1);
    CHECK(pool.exemplars[0].id == "qa-everest");
}

TEST_CASE("NLI and MT exemplars render task-specific answers") {
    const auto nli = exemplar_from_example(make_nli_example());
    CHECK(nli.answer == "True");  // gold 0 is the entailment reading
    CHECK(nli.response == "An instrument.");

    const auto mt = exemplar_from_example(make_mt_example());
    // MT has no sampled intent; the first reading is demonstrated
    CHECK(mt.answer == "C'est tellement adorable.");
    CHECK(mt.context == "My friend walked my dog when I was sick.");
    CHECK(mt.response == "Kind, like a thoughtful gesture.");
}

TEST_CASE("exemplar sampling is deterministic and bounded by the pool") {
    const auto pool = synthetic_pool(6, 6);
    const auto first = sample_exemplars(pool, 4, 7);
    const auto second = sample_exemplars(pool, 4, 7);
    REQUIRE(first.size() == 4);
    for (std::size_t i = 0; i < first.size(); ++i) CHECK(first[i].id == second[i].id);

    std::set<std::string> ids;
    for (const auto& e : first) ids.insert(e.id);
    CHECK(ids.size() == 4);  // no repeats

    CHECK(sample_exemplars(pool, 0, 7).empty());
    CHECK_THROWS_AS(sample_exemplars(pool, 13, 7), PoolTooSmallError);
    CHECK_THROWS_AS(sample_exemplars(pool, -1, 7), ConfigError);
}

TEST_CASE("the 50-50 mix draws ceil/floor halves by kind") {
    const auto pool = synthetic_pool(6, 6);
    for (int n : {2, 4, 5, 7}) {
        const auto picked = sample_exemplars(pool, n, 11, true);
        REQUIRE(picked.size() == static_cast<std::size_t>(n));
        const auto ambiguous = static_cast<int>(
            std::count_if(picked.begin(), picked.end(), [](const Exemplar& e) { return e.ambiguous; }));
        CHECK(ambiguous == (n + 1) / 2);
    }
    // 4 ambiguous needed but only 3 present
    CHECK_THROWS_AS(sample_exemplars(synthetic_pool(3, 9), 7, 11, true), PoolTooSmallError);
    CHECK_THROWS_AS(sample_exemplars(synthetic_pool(9, 1), 4, 11, true), PoolTooSmallError);
}

// ---- prompt assembly -------------------------------------------------------

TEST_CASE("direct prompts show worked answers then the live input") {
    const auto templates = TemplateSet::builtin();
    const auto exemplars = std::vector<Exemplar>{exemplar_from_example(by_id("qa-everest"))};
    const auto messages = build_prompt(templates, PromptVariant::direct, TaskKind::qa, exemplars,
                                       by_id("qa-dragon-ball"));
    REQUIRE(messages.size() == 4);
    CHECK(messages[0] == system_msg("Answer the question."));
    CHECK(messages[1] == user_msg("Question: What is the tallest mountain on earth?"));
    CHECK(messages[2] == assistant_msg("Answer: Mount Everest."));
    CHECK(messages[3] == user_msg("Question: When does the new dragon ball z series come out?"));
}

TEST_CASE("follow prompts append the clarifying exchange to the live input") {
    const auto templates = TemplateSet::builtin();
    const std::vector<Exemplar> exemplars = {exemplar_from_example(by_id("qa-star-trek")),
                                             exemplar_from_example(by_id("qa-everest"))};
    const auto& live = by_id("qa-dragon-ball");
    PromptExtras extras;
    extras.clarifying_question = live.exchange->question;
    extras.clarifying_response = live.exchange->answers[1];
    const auto messages =
        build_prompt(templates, PromptVariant::follow, TaskKind::qa, exemplars, live, extras);

    REQUIRE(messages.size() == 10);
    CHECK(messages[0] == system_msg("Answer the question."));
    // ambiguous exemplar: four turns ending in its answer
    CHECK(messages[1] == user_msg("Question: Who played the captain in star trek?"));
    CHECK(messages[2] == assistant_msg("Follow-Up Question: Which Star Trek series do you mean?"));
    CHECK(messages[3] == user_msg("Follow-Up Answer: The Original Series."));
    CHECK(messages[4] == assistant_msg("Answer: William Shatner."));
    // unambiguous exemplar: answered directly
    CHECK(messages[5] == user_msg("Question: What is the tallest mountain on earth?"));
    CHECK(messages[6] == assistant_msg("Answer: Mount Everest."));
    // live input with the exchange under evaluation
    CHECK(messages[7] == user_msg("Question: When does the new dragon ball z series come out?"));
    CHECK(messages[8] == assistant_msg(
              "Follow-Up Question: Are you asking about the Japanese premiere or the US premiere?"));
    CHECK(messages[9] == user_msg("Follow-Up Answer: The US premiere."));

    CHECK_THROWS_AS(
        build_prompt(templates, PromptVariant::follow, TaskKind::qa, exemplars, live, {}),
        MissingExtrasError);
}

TEST_CASE("MT follow prompts say Follow-Up Response") {
    const auto templates = TemplateSet::builtin();
    const std::vector<Exemplar> exemplars = {exemplar_from_example(make_mt_example())};
    auto live = make_mt_context_example();
    PromptExtras extras;
    extras.clarifying_question = "Do you mean kind or sugary?";
    extras.clarifying_response = "Kind, like a thoughtful gesture.";
    const auto messages =
        build_prompt(templates, PromptVariant::follow, TaskKind::mt, exemplars, live, extras);
    REQUIRE(messages.size() == 8);
    CHECK(messages[1] == user_msg("English: That is so sweet!"));
    CHECK(messages[3] == user_msg("Follow-Up Response: Kind, like a thoughtful gesture."));
    CHECK(messages[4] == assistant_msg("French: C'est tellement adorable."));
    CHECK(messages[7] == user_msg("Follow-Up Response: Kind, like a thoughtful gesture."));
}

TEST_CASE("self-ask prompts end mid-assistant-turn for scoring") {
    const auto templates = TemplateSet::builtin();
    const std::vector<Exemplar> exemplars = {exemplar_from_example(by_id("qa-star-trek")),
                                             exemplar_from_example(by_id("qa-everest"))};
    const auto messages = build_prompt(templates, PromptVariant::selfask, TaskKind::qa, exemplars,
                                       by_id("qa-dragon-ball"));
    REQUIRE(messages.size() == 9);
    CHECK(messages[2].role == Role::assistant);
    CHECK(messages[2].content ==
          "Is a Follow-Up Question Needed Here? Yes.\n"
          "Follow-Up Question: Which Star Trek series do you mean?");
    CHECK(messages[6].role == Role::assistant);
    CHECK(messages[6].content ==
          "Is a Follow-Up Question Needed Here? No.\nAnswer: Mount Everest.");
    CHECK(messages.back() == assistant_msg("Is a Follow-Up Question Needed Here?"));
    CHECK(templates.get(TaskKind::qa, PromptVariant::selfask).text("no_token") == " No");
}

TEST_CASE("disambig prompts replace the input with one reading") {
    const auto templates = TemplateSet::builtin();
    const auto& live = by_id("qa-dragon-ball");
    PromptExtras extras;
    extras.disambiguated_input = live.interpretations[1].text;
    const auto messages =
        build_prompt(templates, PromptVariant::disambig, TaskKind::qa,
                     {exemplar_from_example(by_id("qa-everest"))}, live, extras);
    REQUIRE(messages.size() == 4);
    CHECK(messages[3] ==
          user_msg("Question: When did the new dragon ball z series first air in the US?"));
    CHECK_THROWS_AS(build_prompt(templates, PromptVariant::disambig, TaskKind::qa,
                                 {exemplar_from_example(by_id("qa-everest"))}, live, {}),
                    MissingExtrasError);
}

TEST_CASE("NLI prompts split premise and claim onto labelled lines") {
    const auto templates = TemplateSet::builtin();
    const auto example = make_nli_example();
    const auto exemplar = exemplar_from_example(example);

    auto unambiguous = example;
    unambiguous.id = "nli-plain";
    unambiguous.input = "The cat sat on the mat.\nA cat was sitting.";
    unambiguous.is_ambiguous = false;
    unambiguous.gold_index = 0;
    unambiguous.interpretations.resize(1);
    unambiguous.interpretations[0].text = unambiguous.input;
    unambiguous.interpretations[0].output = NliOutput{EntailmentLabel::entailment};
    unambiguous.exchange.reset();

    const auto messages = build_prompt(templates, PromptVariant::direct, TaskKind::nli,
                                       {exemplar_from_example(unambiguous)}, example);
    REQUIRE(messages.size() == 4);
    CHECK(messages[1] ==
          user_msg("Context: The cat sat on the mat.\nClaim: A cat was sitting."));
    CHECK(messages[2] == assistant_msg("Answer: True."));
    CHECK(messages[3] ==
          user_msg("Context: He tuned the bass before the show.\n"
                   "Claim: He tuned a musical instrument."));

    // disambig swaps in the revised premise/claim pair
    PromptExtras extras;
    extras.disambiguated_input = example.interpretations[0].text;
    const auto disambig = build_prompt(templates, PromptVariant::disambig, TaskKind::nli,
                                       {exemplar}, example, extras);
    CHECK(disambig.back() ==
          user_msg("Context: He tuned the bass guitar before the show.\n"
                   "Claim: He tuned a musical instrument."));

    AmbiguousExample broken = example;
    broken.input = "no newline separator";
    CHECK_THROWS_AS(
        build_prompt(templates, PromptVariant::direct, TaskKind::nli, {exemplar}, broken),
        SchemaError);
}

TEST_CASE("MT disambig prompts prepend the context sentence") {
    const auto templates = TemplateSet::builtin();
    const auto example = make_mt_example();
    PromptExtras extras;
    extras.context = example.interpretations[0].text;
    const auto messages =
        build_prompt(templates, PromptVariant::disambig, TaskKind::mt,
                     {exemplar_from_example(make_mt_context_example())}, example, extras);
    REQUIRE(messages.size() == 4);
    // the exemplar's context is its own sentence
    CHECK(messages[1] ==
          user_msg("Context: My friend walked my dog when I was sick.\n"
                   "English: My friend walked my dog when I was sick."));
    CHECK(messages[3] ==
          user_msg("Context: My friend walked my dog when I was sick.\n"
                   "English: That is so sweet!"));
    CHECK_THROWS_AS(build_prompt(templates, PromptVariant::disambig, TaskKind::mt,
                                 {exemplar_from_example(make_mt_context_example())}, example, {}),
                    MissingExtrasError);
}

TEST_CASE("intent simulation prompts reuse the follow-up structure") {
    const auto templates = TemplateSet::builtin();
    const std::vector<Exemplar> exemplars = {exemplar_from_example(by_id("qa-star-trek"))};
    const auto& live = by_id("qa-dragon-ball");

    const auto question_prompt = build_prompt(templates, PromptVariant::intentsim_question,
                                              TaskKind::qa, exemplars, live);
    REQUIRE(question_prompt.size() == 6);
    CHECK(question_prompt[2] ==
          assistant_msg("Follow-Up Question: Which Star Trek series do you mean?"));
    CHECK(question_prompt.back() ==
          user_msg("Question: When does the new dragon ball z series come out?"));

    PromptExtras extras;
    extras.clarifying_question = "Do you mean the Japanese or US premiere?";
    const auto answer_prompt = build_prompt(templates, PromptVariant::intentsim_answer,
                                            TaskKind::qa, exemplars, live, extras);
    REQUIRE(answer_prompt.size() == 7);
    CHECK(answer_prompt.back() ==
          assistant_msg("Follow-Up Question: Do you mean the Japanese or US premiere?"));
    CHECK_THROWS_AS(build_prompt(templates, PromptVariant::intentsim_answer, TaskKind::qa,
                                 exemplars, live, {}),
                    MissingExtrasError);

    // these variants have no direct exemplar form
    const std::vector<Exemplar> plain = {exemplar_from_example(by_id("qa-everest"))};
    CHECK_THROWS_AS(build_prompt(templates, PromptVariant::intentsim_question, TaskKind::qa, plain,
                                 live),
                    MissingExtrasError);
}

TEST_CASE("oracle prompts list the input and its numbered interpretations") {
    const auto templates = TemplateSet::builtin();
    const auto messages = build_oracle_prompt(templates, by_id("qa-dragon-ball"));
    REQUIRE(messages.size() == 1);
    CHECK(messages[0].role == Role::user);

    const std::string expected_tail =
        "Now do it yourself:\n"
        "Ambiguous Question: When does the new dragon ball z series come out?\n"
        "Intended Interpretation 1: When did the new dragon ball z series first air in Japan?\n"
        "Intended Interpretation 2: When did the new dragon ball z series first air in the US?";
    const auto& content = messages[0].content;
    REQUIRE(content.size() >= expected_tail.size());
    CHECK(content.substr(content.size() - expected_tail.size()) == expected_tail);
    CHECK(content.find("Here are two examples:") != std::string::npos);
    CHECK(content.find("Who has the highest goals in world football?") != std::string::npos);

    CHECK_THROWS_AS(build_oracle_prompt(templates, by_id("qa-everest")), Error);
}

TEST_CASE("MT oracle prompts list translations, NLI ones keep both lines") {
    const auto templates = TemplateSet::builtin();

    const auto mt = build_oracle_prompt(templates, make_mt_example());
    const std::string mt_tail =
        "Ambiguous Phrase: That is so sweet!\n"
        "Translation 1: C'est tellement adorable.\n"
        "Translation 2: C'est tellement sucr\xc3\xa9.";
    CHECK(mt[0].content.substr(mt[0].content.size() - mt_tail.size()) == mt_tail);

    const auto nli = build_oracle_prompt(templates, make_nli_example());
    const std::string nli_tail =
        "Ambiguous Phrase: He tuned the bass before the show.\n"
        "He tuned a musical instrument.\n"
        "Intended Interpretation 1: He tuned the bass guitar before the show.\n"
        "He tuned a musical instrument.\n"
        "Intended Interpretation 2: He prepared the bass fish before the show.\n"
        "He tuned a musical instrument.";
    CHECK(nli[0].content.substr(nli[0].content.size() - nli_tail.size()) == nli_tail);
}

// ---- output parsing --------------------------------------------------------

TEST_CASE("answer lines parse to their payload") {
    const auto templates = TemplateSet::builtin();
    auto parse_qa = [&](const std::string& text) {
        return parse_structured_output(templates, PromptVariant::direct, TaskKind::qa, text);
    };
    CHECK(parse_qa("Answer: Cleopatra Coleman.").text == "Cleopatra Coleman.");
    CHECK(parse_qa("Answer: July 5, 2015.\nAnswer: other").text == "July 5, 2015.");
    CHECK(parse_qa("Sure!\nAnswer: 58.").text == "58.");
    CHECK_THROWS_AS(parse_qa("I cannot answer that."), UnparseableOutputError);
    CHECK_THROWS_AS(parse_qa("Answer:   "), UnparseableOutputError);

    const auto mt = parse_structured_output(templates, PromptVariant::direct, TaskKind::mt,
                                            "French: C'est si gentil !");
    CHECK(mt.text == "C'est si gentil !");
}

TEST_CASE("NLI outputs reduce to a verdict token") {
    const auto templates = TemplateSet::builtin();
    auto parse_nli = [&](const std::string& text) {
        return parse_structured_output(templates, PromptVariant::direct, TaskKind::nli, text);
    };
    CHECK(parse_nli("Answer: True.").label == EntailmentLabel::entailment);
    CHECK(parse_nli("Answer: Inconclusive.").label == EntailmentLabel::neutral);
    CHECK(parse_nli("false").label == EntailmentLabel::contradiction);
    CHECK(parse_nli("The claim is FALSE here.").label == EntailmentLabel::contradiction);
    // first verdict token wins
    CHECK(parse_nli("True, not false.").label == EntailmentLabel::entailment);
    // word boundaries: "untrue" is not a verdict
    CHECK_THROWS_AS(parse_nli("That is untrue and falsehood."), UnparseableOutputError);
    CHECK_THROWS_AS(parse_nli("no verdict at all"), UnparseableOutputError);
}

TEST_CASE("intent simulation outputs parse question and answer lines") {
    const auto templates = TemplateSet::builtin();
    const auto q = parse_structured_output(templates, PromptVariant::intentsim_question,
                                           TaskKind::qa,
                                           "Follow-Up Question: Which premiere do you mean?");
    CHECK(q.text == "Which premiere do you mean?");
    const auto a = parse_structured_output(templates, PromptVariant::intentsim_answer,
                                           TaskKind::qa, "Follow-Up Answer: The US premiere.");
    CHECK(a.text == "The US premiere.");
    const auto mt = parse_structured_output(templates, PromptVariant::intentsim_answer,
                                            TaskKind::mt, "Follow-Up Response: The dessert kind.");
    CHECK(mt.text == "The dessert kind.");
    CHECK_THROWS_AS(parse_structured_output(templates, PromptVariant::intentsim_question,
                                            TaskKind::qa, "I would ask about the premiere."),
                    UnparseableOutputError);

    // self-ask continuations come back verbatim
    CHECK(parse_structured_output(templates, PromptVariant::selfask, TaskKind::qa, " No.\n").text ==
          "No.");
}

TEST_CASE("oracle completions must contain exactly k responses") {
    const auto templates = TemplateSet::builtin();
    const std::string good =
        "Clarification Question: Japanese or US premiere?\n"
        "Clarification Response 1: The Japanese premiere.\n"
        "Clarification Response 2: The US premiere.\n";
    const auto exchange = parse_oracle_exchange(templates, TaskKind::qa, good, 2);
    CHECK(exchange.question == "Japanese or US premiere?");
    REQUIRE(exchange.answers.size() == 2);
    CHECK(exchange.answers[1] == "The US premiere.");

    CHECK_THROWS_AS(parse_oracle_exchange(templates, TaskKind::qa, good, 3), ParseError);
    const std::string extra = good + "Clarification Response 3: Both premieres.\n";
    CHECK_THROWS_AS(parse_oracle_exchange(templates, TaskKind::qa, extra, 2), ParseError);
    CHECK_THROWS_AS(parse_oracle_exchange(templates, TaskKind::qa,
                                          "No question here.\nClarification Response 1: x\n", 1),
                    ParseError);
}

TEST_CASE("oracle generation runs the prompt and flags language leaks") {
    const auto templates = TemplateSet::builtin();
    nlohmann::json script;
    script["id"] = "oracle-mock";
    nlohmann::json qa_rule;
    qa_rule["contains"] = "Ambiguous Question: When does the new dragon ball z series come out?";
    qa_rule["text"] =
        "Clarification Question: Are you asking about Japan or the US?\n"
        "Clarification Response 1: Japan.\n"
        "Clarification Response 2: The US.";
    nlohmann::json mt_rule;
    mt_rule["contains"] = "Ambiguous Phrase: That is so sweet!";
    mt_rule["text"] =
        "Clarification Question: Kind or sugary?\n"
        "Clarification Response 1: Kind.\n"
        "Clarification Response 2: Sucr\xc3\xa9, like a dessert.";
    script["rules"] = nlohmann::json::array({qa_rule, mt_rule});

    GatewayOptions options;
    options.cache_dir = (fresh_dir("oracle_cache") / "cache").string();
    ChatGateway gateway(std::make_shared<ScriptedBackend>(script), options);

    const auto qa = generate_oracle_clarification(gateway, templates, by_id("qa-dragon-ball"));
    CHECK(qa.exchange.question == "Are you asking about Japan or the US?");
    REQUIRE(qa.exchange.answers.size() == 2);
    CHECK(qa.warnings.empty());

    const auto mt = generate_oracle_clarification(gateway, templates, make_mt_example());
    REQUIRE(mt.warnings.size() == 1);
    CHECK(mt.warnings[0].find("response 2") != std::string::npos);
}
