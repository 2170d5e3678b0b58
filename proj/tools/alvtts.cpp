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

// alvtts command-line driver: one subcommand per pipeline stage.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "alvtts/error.hpp"
#include "alvtts/pipeline/evaluate.hpp"
#include "alvtts/pipeline/stages.hpp"

namespace {

using alvtts::pipeline::RunConfig;

RunConfig resolve_config(const std::string& path, const std::string& preset, const std::string& work_dir) {
  RunConfig cfg = path.empty() ? alvtts::pipeline::preset_config(preset) : alvtts::pipeline::load_config(path);
  if (!work_dir.empty()) cfg.paths.work_dir = work_dir;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Accent latent variable TTS pipeline"};
  app.require_subcommand(1);
  std::string config_path, preset = "desk", work_dir;
  bool quiet = false;
  app.add_option("-c,--config", config_path, "run configuration (JSON)");
  app.add_option("--preset", preset, "budget preset when no config is given")->check(CLI::IsMember({"desk", "full"}));
  app.add_option("--work-dir", work_dir, "override paths.work_dir");
  app.add_flag("-q,--quiet", quiet, "suppress progress output");

  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic two-dialect corpus");
  auto* aug = app.add_subcommand("augment", "build the multi-dialect text corpus by translation");
  auto* bert = app.add_subcommand("pretrain-bert", "pre-train MD-PL-BERT on the text corpus");
  auto* stage1 = app.add_subcommand("train-stage1", "jointly train the reference encoder and backbone");
  auto* stage2 = app.add_subcommand("train-stage2", "fine-tune the ALV predictor");
  bool from_scratch = false;
  stage2->add_flag("--from-scratch", from_scratch, "skip MD-PL-BERT initialisation");

  auto* synth = app.add_subcommand("synthesize", "synthesize acoustic features for a sentence");
  alvtts::pipeline::SynthesizeRequest req;
  std::string mode = "predicted_alv", output, wav;
  synth->add_option("--text", req.text, "space-separated words")->required();
  synth->add_option("--speaker", req.speaker, "speaker id")->required();
  synth->add_option("--dialect", req.dialect, "dialect id (predicted_alv mode)");
  synth->add_option("--mode", mode, "predicted_alv | reference_alv | no_alv");
  synth->add_option("--ref", req.reference_utt, "reference utterance id (reference_alv mode)");
  synth->add_option("-o,--output", output, "output feature file (.alvf)")->required();
  synth->add_option("--wav", wav, "optional WAV rendering");

  auto* extract = app.add_subcommand("extract-alv", "extract ALVs from corpus utterances");
  std::vector<std::string> utts;
  std::string extract_out;
  extract->add_option("--utt", utts, "utterance ids (default: all)");
  extract->add_option("-o,--output", extract_out, "output TSV (default: stdout)");

  auto* eval = app.add_subcommand("evaluate", "compute metrics and write the JSON summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = resolve_config(config_path, preset, work_dir);
    std::ostream* log = quiet ? nullptr : &std::cerr;
    if (*gen) {
      alvtts::pipeline::cmd_gen_corpus(cfg, log);
    } else if (*aug) {
      alvtts::pipeline::cmd_augment(cfg, log);
    } else if (*bert) {
      alvtts::pipeline::cmd_pretrain_bert(cfg, log);
    } else if (*stage1) {
      alvtts::pipeline::cmd_train_stage1(cfg, log);
    } else if (*stage2) {
      alvtts::pipeline::cmd_train_stage2(cfg, from_scratch, log);
    } else if (*synth) {
      req.mode = alvtts::pipeline::parse_synth_mode(mode);
      req.output = output;
      req.wav = wav;
      alvtts::pipeline::cmd_synthesize(cfg, req, log);
    } else if (*extract) {
      const std::string tsv = alvtts::pipeline::cmd_extract_alv(cfg, utts);
      if (extract_out.empty()) std::cout << tsv;
      else alvtts::write_file_bytes(extract_out, tsv);
    } else if (*eval) {
      const auto metrics = alvtts::pipeline::cmd_evaluate(cfg, log);
      if (!quiet) std::cout << metrics.dump(2) << '\n';
    }
  } catch (const alvtts::Error& e) {
    std::cerr << "alvtts: " << e.what() << '\n';
    return alvtts::exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "alvtts: malformed JSON: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "alvtts: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
