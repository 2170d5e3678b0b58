// Copyright (c) 2026 The alvtts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "alvtts/augment/augment.hpp"
#include "support.hpp"

namespace alvtts::augment {
namespace {

using corpus::DialectId;
using testing::error_kind_of;

TEST(Prompt, DefaultTemplate) {
  EXPECT_EQ(build_prompt("it rains", "Osaka-dialect"),
            "Rewrite the following sentences as if they were in Osaka-dialect: it rains");
}

TEST(Prompt, NoPlaceholdersSurvive) {
  const auto p = build_prompt("w1 w2", "DLB");
  EXPECT_EQ(p.find("[target dialect]"), std::string::npos);
  EXPECT_EQ(p.find("[sentence]"), std::string::npos);
}

TEST(Prompt, SubstitutionIsPositionFaithful) {
  const std::vector<std::string> sentences = {"[sentence]", "a [sentence] b", "[target dialect] and [sentence]",
                                              "x[sentence][sentence]y"};
  for (const std::string tmpl : {"Rewrite the following sentences as if they were in [target dialect]: [sentence]",
                                 "[sentence] -> [target dialect]"}) {
    PromptTemplate prompt(tmpl);
    for (const auto& s : sentences) {
      // Substitute at the template's own positions, right to left, so inserted text is never rescanned.
      std::string oracle = tmpl;
      const auto ps = tmpl.find("[sentence]"), pt = tmpl.find("[target dialect]");
      if (ps > pt) {
        oracle.replace(ps, 10, s);
        oracle.replace(pt, 16, "Kyoto");
      } else {
        oracle.replace(pt, 16, "Kyoto");
        oracle.replace(ps, 10, s);
      }
      EXPECT_EQ(build_prompt(s, "Kyoto", prompt), oracle);
    }
  }
}

TEST(Prompt, TemplateAndInputValidation) {
  EXPECT_EQ(error_kind_of([] { PromptTemplate("no placeholders"); }), ErrorKind::kConfig);
  EXPECT_EQ(error_kind_of([] { PromptTemplate("[sentence] [sentence] [target dialect]"); }), ErrorKind::kConfig);
  EXPECT_EQ(error_kind_of([] { build_prompt("", "DLB"); }), ErrorKind::kInput);
}

TEST(RuleBased, EmptyTableIsIdentity) {
  RuleBasedTranslator t;
  EXPECT_EQ(t.translate("w1 w2 w3", "DLB"), "w1 w2 w3");
}

TEST(RuleBased, WordSubstitution) {
  RuleBasedTranslator t({{"DLB", {{"w_rain", "w_rain_B"}}}});
  EXPECT_EQ(t.translate("w1 w_rain w2", "DLB"), "w1 w_rain_B w2");
  EXPECT_EQ(t.translate("w1 w_rain w2", "DLC"), "w1 w_rain w2");
}

TEST(RuleBased, LoadsTable) {
  testing::TempDir dir("rules");
  std::ofstream(dir / "t.tsv") << "DLB\tw_rain\tw_rain_B\n\nDLB\tw1\tw1b\n";
  EXPECT_EQ(load_rule_translator(dir / "t.tsv").translate("w1 w_rain", "DLB"), "w1b w_rain_B");
  std::ofstream(dir / "bad.tsv") << "DLB\tonly\n";
  EXPECT_EQ(error_kind_of([&] { load_rule_translator(dir / "bad.tsv"); }), ErrorKind::kParse);
}

class ScriptedBackend final : public TranslatorBackend {
 public:
  explicit ScriptedBackend(int failures) : failures_(failures) {}
  std::string translate(const std::string& sentence, const std::string& dialect) override {
    std::lock_guard lock(mutex_);
    if (calls_[sentence]++ < failures_) fail(ErrorKind::kRemote, "scripted failure");
    return sentence + " @" + dialect;
  }

 private:
  int failures_;
  std::mutex mutex_;
  std::map<std::string, int> calls_;
};

TEST(TranslateCorpus, RetriesWithDoublingBackoff) {
  ScriptedBackend backend(2);
  std::vector<double> sleeps;
  TranslateOptions opt;
  opt.sleep = [&](double s) { sleeps.push_back(s); };
  auto records = translate_corpus({"w1 w2"}, "DLB", backend, opt);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_TRUE(records[0].ok());
  EXPECT_EQ(records[0].attempts, 3);
  EXPECT_EQ(*records[0].translated, "w1 w2 @DLB");
  EXPECT_EQ(sleeps, (std::vector<double>{1.0, 2.0}));
}

TEST(TranslateCorpus, ExhaustedRetriesRecordTheError) {
  ScriptedBackend backend(5);
  TranslateOptions opt;
  opt.sleep = [](double) {};
  auto records = translate_corpus({"w1"}, "DLB", backend, opt);
  EXPECT_FALSE(records[0].ok());
  EXPECT_EQ(records[0].attempts, 3);
  EXPECT_NE(records[0].error.find("scripted failure"), std::string::npos);
}

TEST(TranslateCorpus, ConcurrentResultsKeepInputOrder) {
  ScriptedBackend backend(1);
  TranslateOptions opt;
  opt.sleep = [](double) {};
  opt.max_in_flight = 4;
  std::vector<std::string> sentences;
  for (int i = 0; i < 40; ++i) sentences.push_back("s" + std::to_string(i));
  auto records = translate_corpus(sentences, "DLB", backend, opt);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    EXPECT_EQ(records[i].index, i);
    EXPECT_EQ(*records[i].translated, sentences[i] + " @DLB");
  }
}

TEST(TranslateCorpus, EmptySentenceIsNotRetried) {
  ScriptedBackend backend(0);
  TranslateOptions opt;
  opt.sleep = [](double) { ADD_FAILURE() << "unexpected backoff"; };
  auto records = translate_corpus({""}, "DLB", backend, opt);
  EXPECT_FALSE(records[0].ok());
  EXPECT_EQ(records[0].attempts, 1);
}

TEST(TranslateCorpus, AuditLogHasOneLinePerAttempt) {
  testing::TempDir dir("audit");
  ScriptedBackend backend(1);
  TranslateOptions opt;
  opt.sleep = [](double) {};
  opt.audit_log = dir / "audit.jsonl";
  translate_corpus({"a", "b"}, "DLB", backend, opt);
  std::ifstream in(dir / "audit.jsonl");
  std::string line;
  int lines = 0, errors = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("prompt"));
    errors += j.contains("error");
    ++lines;
  }
  EXPECT_EQ(lines, 4);
  EXPECT_EQ(errors, 2);
}

class MockServer {
 public:
  explicit MockServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }
  RemoteOptions options() const {
    RemoteOptions o;
    o.base_url = "http://127.0.0.1:" + std::to_string(port_);
    o.timeout_seconds = 5.0;
    return o;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(RemoteLlm, TwoFailuresThenSuccess) {
  std::atomic<int> calls{0};
  std::string last_prompt;
  MockServer server([&](const httplib::Request& req, httplib::Response& res) {
    if (calls++ < 2) {
      res.status = 503;
      return;
    }
    last_prompt = nlohmann::json::parse(req.body).at("prompt").get<std::string>();
    res.set_content(R"({"text": "  w1 w_rain_B  "})", "application/json");
  });
  RemoteLlmTranslator backend(server.options());
  TranslateOptions opt;
  opt.sleep = [](double) {};
  auto records = translate_corpus({"w1 w_rain"}, "DLB", backend, opt);
  EXPECT_EQ(records[0].attempts, 3);
  EXPECT_EQ(*records[0].translated, "w1 w_rain_B");
  EXPECT_EQ(last_prompt, build_prompt("w1 w_rain", "DLB"));
}

TEST(RemoteLlm, MalformedResponsesAreRemoteErrors) {
  std::atomic<int> calls{0};
  MockServer server([&](const httplib::Request&, httplib::Response& res) {
    switch (calls++ % 3) {
      case 0: res.set_content("not json", "text/plain"); break;
      case 1: res.set_content(R"({"choices": []})", "application/json"); break;
      default: res.set_content(R"({"text": "   "})", "application/json"); break;
    }
  });
  RemoteLlmTranslator backend(server.options());
  for (int i = 0; i < 3; ++i)
    EXPECT_EQ(error_kind_of([&] { backend.translate("w1", "DLB"); }), ErrorKind::kRemote);
}

TEST(RemoteLlm, UnreachableServerIsARemoteError) {
  RemoteOptions o;
  o.base_url = "http://127.0.0.1:1";
  o.timeout_seconds = 1.0;
  RemoteLlmTranslator backend(o);
  EXPECT_EQ(error_kind_of([&] { backend.translate("w1", "DLB"); }), ErrorKind::kRemote);
}

TEST(Records, JsonLinesRoundTrip) {
  std::vector<TranslationRecord> records(2);
  records[0] = {0, "a b", std::string("a c"), "", 1};
  records[1] = {1, "d", std::nullopt, "remote error: boom", 3};
  std::istringstream in(format_translation_records(records));
  auto back = parse_translation_records(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(*back[0].translated, "a c");
  EXPECT_FALSE(back[1].ok());
  EXPECT_EQ(back[1].error, "remote error: boom");
  EXPECT_EQ(back[1].attempts, 3);
}

corpus::Lexicon tiny_lexicon() {
  corpus::Lexicon lex;
  lex.add("kame", {{"k", "a", "m", "e"}, 2});
  lex.add("kasa", {{"k", "a", "s", "a"}, 2});
  return lex;
}

TEST(Assemble, CountsAndSkips) {
  const auto lex = tiny_lexicon();
  std::vector<SourceSentence> originals = {{DialectId("DLA"), {"kame"}}, {DialectId("DLA"), {"kasa", "kame"}},
                                           {DialectId("DLA"), {"kasa"}}};
  std::vector<TranslationRecord> tr(3);
  tr[0] = {0, "kame", std::string("kame"), "", 1};
  tr[1] = {1, "kasa kame", std::string("kasa unknown"), "", 1};
  tr[2] = {2, "kasa", std::nullopt, "remote error", 3};
  std::ostringstream warnings;
  auto out = assemble_multidialect_corpus(originals, tr, DialectId("DLB"), lex, &warnings);
  EXPECT_LE(out.entries.size(), 2 * originals.size());
  EXPECT_EQ(out.entries.size(), 4u);
  EXPECT_EQ(out.skipped, 1u);
  EXPECT_NE(warnings.str().find("unknown"), std::string::npos);
  EXPECT_EQ(out.entries[3].dialect, DialectId("DLB"));
}

TEST(Assemble, NoTranslationsGiveOriginalsOnly) {
  const auto lex = tiny_lexicon();
  std::vector<SourceSentence> originals = {{DialectId("DLA"), {"kame"}}, {DialectId("DLA"), {"kasa"}}};
  auto out = assemble_multidialect_corpus(originals, {}, DialectId("DLB"), lex, nullptr);
  ASSERT_EQ(out.entries.size(), 2u);
  EXPECT_EQ(out.entries[1].graphemes, (std::vector<std::string>{"kasa"}));
  EXPECT_EQ(out.entries[1].phonemes, (std::vector<std::string>{"k", "a", "s", "a"}));
}

TEST(Assemble, EveryLineParsesBack) {
  const auto lex = tiny_lexicon();
  std::vector<SourceSentence> originals = {{DialectId("DLA"), {"kame", "kasa"}}, {DialectId("DLA"), {"kasa"}}};
  RuleBasedTranslator identity;
  TranslateOptions opt;
  opt.sleep = [](double) {};
  auto tr = translate_corpus({"ame kasa", "kasa"}, "DLB", identity, opt);
  auto out = assemble_multidialect_corpus(originals, tr, DialectId("DLB"), lex, nullptr);
  std::string text;
  for (const auto& e : out.entries) text += mdplbert::format_text_corpus_line(e) + '\n';
  std::istringstream in(text);
  EXPECT_EQ(mdplbert::parse_text_corpus(in), out.entries);
}

}  // namespace
}  // namespace alvtts::augment
