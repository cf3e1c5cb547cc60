// Command-line front end for the patchlock library: key management, toy model
// training, model/image encryption, equivalence checks, evaluation, and the
// wrong-key experiment.
//
// Exit codes: 0 success (including a FAIL verdict from `verify`, which is a
// measurement), 1 domain error (bad file, bad key, bad state), 2 usage error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "patchlock/error.hpp"
#include "patchlock/experiment.hpp"
#include "patchlock/image.hpp"
#include "patchlock/key.hpp"
#include "patchlock/matrix.hpp"
#include "patchlock/metrics.hpp"
#include "patchlock/model.hpp"
#include "patchlock/protect.hpp"
#include "patchlock/rng.hpp"

namespace {

using namespace patchlock;

// Key files named on the command line resolve against the working directory
// first and $PATCHLOCK_KEY_DIR second.
std::string resolve_key_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) return path;
  if (const char* dir = std::getenv("PATCHLOCK_KEY_DIR")) {
    const fs::path candidate = fs::path(dir) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  return path;  // let read_key report the missing file
}

// A key given either as a PLK1 file or inline as hex.
struct KeySource {
  std::string path;
  std::string hex;

  bool given() const { return !path.empty() || !hex.empty(); }

  SecretKey load() const {
    if (!hex.empty()) return SecretKey::from_hex(hex);
    return read_key(resolve_key_path(path));
  }
};

void add_key_options(CLI::App* cmd, KeySource& src) {
  auto* group = cmd->add_option_group("key", "Secret key");
  group->add_option("-k,--key", src.path,
                    "Key file (PLK1); also searched under $PATCHLOCK_KEY_DIR");
  group->add_option("--key-hex", src.hex, "Key inline as 64 hex digits");
  group->require_option(1);
}

// As above but optional; used where a key merely switches on a code path.
void add_optional_key_options(CLI::App* cmd, KeySource& src, const std::string& name,
                              const std::string& help) {
  auto* group = cmd->add_option_group(name, help);
  group->add_option("--" + name, src.path,
                    help + " as a key file (PLK1); also searched under $PATCHLOCK_KEY_DIR");
  group->add_option("--" + name + "-hex", src.hex, help + " inline as 64 hex digits");
  group->require_option(0, 1);
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Images travel either as PLT1 tensors or as 8-bit PPMs, chosen by extension.
ImageTensor load_image(const std::string& path) {
  if (has_suffix(path, ".ppm")) return read_ppm(path);
  return read_tensor(path);
}

void store_image(const std::string& path, const ImageTensor& x) {
  if (has_suffix(path, ".ppm")) {
    write_ppm(path, x);  // clamps to [0,1]; encrypted tensors belong in .plt
    return;
  }
  write_tensor(path, x);
}

// Reads the leading PLW1 block of a weights or model file and keeps any
// trailing bytes (the head block of a full model) verbatim, so encryption
// can rewrite the embedding without understanding the rest of the file.
struct WeightsFile {
  PatchEmbedWeights weights;
  std::string trailer;
};

WeightsFile read_weights_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  WeightsFile wf;
  wf.weights = read_weights(in, path);
  std::ostringstream rest;
  rest << in.rdbuf();
  wf.trailer = rest.str();
  return wf;
}

void write_weights_file(const std::string& path, const WeightsFile& wf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_weights(out, wf.weights);
  out.write(wf.trailer.data(), static_cast<std::streamsize>(wf.trailer.size()));
  if (!out) throw IoError("write to " + path + " failed");
}

// Dataset comes from a directory of files or is generated on the fly.
struct DatasetSource {
  std::string dir;
  int samples = 32;
  uint64_t seed = 2;

  void add_options(CLI::App* cmd) {
    cmd->add_option("-d,--data", dir, "Dataset directory (image_NNNN.plt + labels_NNNN.ppm)");
    cmd->add_option("--samples", samples, "Generate this many synthetic samples instead")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--data-seed", seed, "Seed for generated samples");
  }

  std::vector<SyntheticSample> load() const {
    if (!dir.empty()) return read_dataset(dir);
    return gen_dataset(seed, samples);
  }
};

int cmd_keygen(const std::string& out_path, bool seeded, uint64_t seed) {
  const SecretKey key = seeded ? key_from_seed(seed) : generate_key();
  write_key(out_path, key);
  std::cout << "wrote " << out_path << "\n";
  std::cout << "key " << key.to_hex() << "\n";
  return 0;
}

int cmd_derive(const KeySource& src, int patch_size, int channels) {
  const KeyMaterial km = derive_matrices(src.load(), patch_size, channels);
  std::cout << "matrix " << km.enc.rows << "x" << km.enc.cols << "\n";
  std::cout << "kappa " << km.kappa << "\n";
  std::cout << "inverse_residual " << identity_residual(km.enc, km.inv) << "\n";
  return 0;
}

int cmd_train(const TrainConfig& cfg, int samples, const std::string& out_path,
              const std::string& dataset_out) {
  const std::vector<SyntheticSample> data = gen_dataset(cfg.seed, samples);
  if (!dataset_out.empty()) {
    write_dataset(dataset_out, data);
    std::cout << "wrote " << data.size() << " samples to " << dataset_out << "\n";
  }
  const ToyModel model = train(cfg, data);
  write_model(out_path, model);

  const IouResult train_iou = evaluate_model(model, data);
  std::cout << "wrote " << out_path << "\n";
  std::cout << "train_miou " << (train_iou.miou ? std::to_string(*train_iou.miou) : "undefined")
            << "\n";
  return 0;
}

int cmd_encrypt_model(const KeySource& src, const std::string& in_path,
                      const std::string& out_path, bool decrypt) {
  WeightsFile wf = read_weights_file(in_path);
  const KeyMaterial km =
      derive_matrices(src.load(), wf.weights.patch_size, wf.weights.channels);
  wf.weights = decrypt ? decrypt_model(wf.weights, km) : encrypt_model(wf.weights, km);
  write_weights_file(out_path, wf);
  std::cout << "wrote " << out_path << (decrypt ? " (decrypted)" : " (encrypted)") << "\n";
  return 0;
}

int cmd_encrypt_image(const KeySource& src, const std::string& in_path,
                      const std::string& out_path, int patch_size, bool decrypt) {
  const ImageTensor x = load_image(in_path);
  const KeyMaterial km = derive_matrices(src.load(), patch_size, x.channels);
  store_image(out_path, decrypt ? decrypt_image(x, km) : encrypt_image(x, km));
  std::cout << "wrote " << out_path << (decrypt ? " (decrypted)" : " (encrypted)") << "\n";
  return 0;
}

int cmd_verify(const KeySource& model_src, const KeySource& image_src,
               const std::string& weights_path, const std::string& image_path,
               double tolerance, uint64_t seed, int trials) {
  const PatchEmbedWeights w = read_weights_file(weights_path).weights;
  if (w.encrypted) {
    throw StateError("verify needs the plain weights; " + weights_path + " is encrypted");
  }
  const KeyMaterial km_model = derive_matrices(model_src.load(), w.patch_size, w.channels);
  const KeyMaterial km_image =
      image_src.given()
          ? derive_matrices(image_src.load(), w.patch_size, w.channels)
          : km_model;

  std::vector<ImageTensor> images;
  if (!image_path.empty()) {
    images.push_back(load_image(image_path));
  } else {
    // No sample image given: probe with synthetic noise images laid out as a
    // single strip of patches, one per position embedding row.
    RandomStream rs(seed_words_from_u64(seed, rng_domain::kDataset));
    for (int t = 0; t < trials; ++t) {
      ImageTensor x(w.patch_size, w.patch_size * w.position.rows, w.channels);
      for (double& v : x.data) v = rs.uniform();
      images.push_back(std::move(x));
    }
  }

  double worst = 0.0;
  bool pass = true;
  for (const ImageTensor& x : images) {
    const EquivalenceReport r = verify_equivalence(x, w, km_model, km_image, tolerance);
    worst = std::max(worst, r.max_abs_diff);
    pass = pass && r.pass;
  }
  std::cout << (pass ? "PASS" : "FAIL") << " max_abs_diff " << worst << " tolerance "
            << tolerance << "\n";
  return 0;  // a FAIL verdict is a finding, not a tool failure
}

int cmd_eval(const std::string& model_path, const DatasetSource& data_src,
             const KeySource& image_src) {
  const ToyModel model = read_model(model_path);
  const std::vector<SyntheticSample> data = data_src.load();

  IouResult result;
  if (image_src.given()) {
    const KeyMaterial km =
        derive_matrices(image_src.load(), model.embed.patch_size, model.embed.channels);
    result = evaluate_model(model, data, &km);
  } else {
    result = evaluate_model(model, data);
  }
  std::cout << format_iou_table(result);
  std::cout << format_iou_kv(result);
  return 0;
}

int cmd_experiment(const std::string& model_path, const DatasetSource& data_src,
                   const KeySource& key_src, int n_wrong, uint64_t trial_seed,
                   const std::string& csv_path) {
  const ToyModel model = read_model(model_path);
  const std::vector<SyntheticSample> data = data_src.load();
  const ExperimentReport report =
      run_access_control_experiment(model, data, key_src.load(), n_wrong, trial_seed);

  std::cout << summary_table(report);
  std::cout << emit_boxplot_stats(report);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw IoError("cannot open " + csv_path + " for writing");
    out << report_csv(report);
    std::cout << "wrote " << csv_path << "\n";
  }
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Access control for patch-embedding models via secret-key encryption"};
  app.require_subcommand(1);

  // keygen
  auto* keygen = app.add_subcommand("keygen", "Generate a secret key file");
  std::string keygen_out;
  uint64_t keygen_seed = 0;
  keygen->add_option("-o,--output", keygen_out, "Key file to write")->required();
  auto* keygen_seed_opt =
      keygen->add_option("--seed", keygen_seed, "Derive the key from this seed (deterministic)");

  // derive
  auto* derive = app.add_subcommand("derive", "Expand a key and print matrix statistics");
  KeySource derive_key;
  int derive_p = 4, derive_c = 3;
  add_key_options(derive, derive_key);
  derive->add_option("-p,--patch-size", derive_p, "Patch size")->check(CLI::PositiveNumber);
  derive->add_option("-c,--channels", derive_c, "Image channels")->check(CLI::PositiveNumber);

  // train-toy
  auto* train_toy = app.add_subcommand("train-toy", "Train the toy model on synthetic data");
  TrainConfig cfg;
  int train_samples = 64;
  std::string train_out, train_dataset_out;
  train_toy->add_option("-o,--output", train_out, "Model file to write")->required();
  train_toy->add_option("--samples", train_samples, "Training set size")
      ->check(CLI::PositiveNumber);
  train_toy->add_option("--seed", cfg.seed, "Seed for data, init, and batches");
  train_toy->add_option("--iterations", cfg.iterations, "SGD iterations")
      ->check(CLI::PositiveNumber);
  train_toy->add_option("--batch-size", cfg.batch_size, "Batch size")
      ->check(CLI::PositiveNumber);
  train_toy->add_option("--lr0", cfg.lr0, "Initial learning rate");
  train_toy->add_option("--momentum", cfg.momentum, "Momentum coefficient");
  train_toy->add_option("--weight-decay", cfg.weight_decay, "L2 penalty");
  train_toy->add_option("--poly-power", cfg.poly_power, "Polynomial decay exponent");
  train_toy->add_option("--patch-size", cfg.patch_size, "Patch size")
      ->check(CLI::PositiveNumber);
  train_toy->add_option("--embed-dim", cfg.embed_dim, "Embedding width")
      ->check(CLI::PositiveNumber);
  train_toy->add_option("--hidden", cfg.hidden, "Head hidden width")
      ->check(CLI::PositiveNumber);
  train_toy->add_option("--dataset-out", train_dataset_out,
                        "Also write the training set to this directory");

  // encrypt-model / decrypt-model
  auto* encrypt_model_cmd = app.add_subcommand("encrypt-model", "Encrypt the patch embedding");
  KeySource em_key;
  std::string em_in, em_out;
  add_key_options(encrypt_model_cmd, em_key);
  encrypt_model_cmd->add_option("-i,--input", em_in, "Plain weights or model file")->required();
  encrypt_model_cmd->add_option("-o,--output", em_out, "Encrypted file to write")->required();

  auto* decrypt_model_cmd =
      app.add_subcommand("decrypt-model", "Recover the plain embedding (key rotation)");
  KeySource dm_key;
  std::string dm_in, dm_out;
  add_key_options(decrypt_model_cmd, dm_key);
  decrypt_model_cmd->add_option("-i,--input", dm_in, "Encrypted weights or model file")
      ->required();
  decrypt_model_cmd->add_option("-o,--output", dm_out, "Plain file to write")->required();

  // encrypt-image / decrypt-image
  auto* encrypt_image_cmd = app.add_subcommand("encrypt-image", "Encrypt an image patch-wise");
  KeySource ei_key;
  std::string ei_in, ei_out;
  int ei_p = 4;
  add_key_options(encrypt_image_cmd, ei_key);
  encrypt_image_cmd->add_option("-i,--input", ei_in, "Image (.plt or .ppm)")->required();
  encrypt_image_cmd->add_option("-o,--output", ei_out, "Output image (.plt recommended)")
      ->required();
  encrypt_image_cmd->add_option("-p,--patch-size", ei_p, "Patch size")
      ->check(CLI::PositiveNumber);

  auto* decrypt_image_cmd = app.add_subcommand("decrypt-image", "Invert encrypt-image");
  KeySource di_key;
  std::string di_in, di_out;
  int di_p = 4;
  add_key_options(decrypt_image_cmd, di_key);
  decrypt_image_cmd->add_option("-i,--input", di_in, "Encrypted image")->required();
  decrypt_image_cmd->add_option("-o,--output", di_out, "Output image")->required();
  decrypt_image_cmd->add_option("-p,--patch-size", di_p, "Patch size")
      ->check(CLI::PositiveNumber);

  // verify
  auto* verify = app.add_subcommand(
      "verify", "Check the cancellation identity on a sample or synthetic images");
  KeySource verify_key, verify_image_key;
  std::string verify_weights, verify_image;
  double verify_tol = 1e-6;
  uint64_t verify_seed = 7;
  int verify_trials = 8;
  add_key_options(verify, verify_key);
  add_optional_key_options(verify, verify_image_key, "image-key",
                           "Key for the image side (defaults to the model key)");
  verify->add_option("-i,--input", verify_weights, "Plain weights or model file")->required();
  verify->add_option("--image", verify_image, "Sample image (.plt or .ppm)");
  verify->add_option("--tolerance", verify_tol, "Pass threshold for the max difference");
  verify->add_option("--seed", verify_seed, "Seed for synthetic probe images");
  verify->add_option("--trials", verify_trials, "Synthetic probe count")
      ->check(CLI::PositiveNumber);

  // eval
  auto* eval = app.add_subcommand("eval", "Mean IoU of a model over a dataset");
  KeySource eval_image_key;
  std::string eval_model;
  DatasetSource eval_data;
  eval->add_option("-m,--model", eval_model, "Model file")->required();
  eval_data.add_options(eval);
  add_optional_key_options(eval, eval_image_key, "image-key",
                           "Encrypt every image with this key before evaluation");

  // experiment
  auto* experiment = app.add_subcommand(
      "experiment", "Baseline vs correct-key vs wrong-key evaluation");
  KeySource exp_key;
  std::string exp_model, exp_csv;
  DatasetSource exp_data;
  int exp_wrong = 50;
  uint64_t exp_trial_seed = 3;
  experiment->add_option("-m,--model", exp_model, "Plain (unencrypted) model file")->required();
  exp_data.add_options(experiment);
  add_key_options(experiment, exp_key);
  experiment->add_option("--wrong-keys", exp_wrong, "Number of wrong-key trials")
      ->check(CLI::PositiveNumber);
  experiment->add_option("--trial-seed", exp_trial_seed, "Seed for the wrong-key draws");
  experiment->add_option("--csv", exp_csv, "Write per-trial results to this CSV file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints the message or help text
    return code == 0 ? 0 : 2;     // normalize every usage error to 2
  }

  if (keygen->parsed())
    return cmd_keygen(keygen_out, keygen_seed_opt->count() > 0, keygen_seed);
  if (derive->parsed()) return cmd_derive(derive_key, derive_p, derive_c);
  if (train_toy->parsed()) return cmd_train(cfg, train_samples, train_out, train_dataset_out);
  if (encrypt_model_cmd->parsed()) return cmd_encrypt_model(em_key, em_in, em_out, false);
  if (decrypt_model_cmd->parsed()) return cmd_encrypt_model(dm_key, dm_in, dm_out, true);
  if (encrypt_image_cmd->parsed())
    return cmd_encrypt_image(ei_key, ei_in, ei_out, ei_p, false);
  if (decrypt_image_cmd->parsed())
    return cmd_encrypt_image(di_key, di_in, di_out, di_p, true);
  if (verify->parsed())
    return cmd_verify(verify_key, verify_image_key, verify_weights, verify_image, verify_tol,
                      verify_seed, verify_trials);
  if (eval->parsed()) return cmd_eval(eval_model, eval_data, eval_image_key);
  if (experiment->parsed())
    return cmd_experiment(exp_model, exp_data, exp_key, exp_wrong, exp_trial_seed, exp_csv);
  return 2;  // unreachable; require_subcommand(1) guards this
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
