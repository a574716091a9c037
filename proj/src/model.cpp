#include "lskd/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "lskd/util.hpp"

namespace lskd {

using ordered_json = nlohmann::ordered_json;

std::string variant_name(ModelVariant v) {
  return v == ModelVariant::single ? "single" : "siamese";
}

ModelVariant parse_variant(const std::string& name) {
  if (name == "single") return ModelVariant::single;
  if (name == "siamese") return ModelVariant::siamese;
  throw std::invalid_argument("parse_variant: unknown variant '" + name + "'");
}

namespace {

void check_dims(const ModelDims& dims) {
  if (dims.feature_dim == 0 || dims.hidden_dim == 0 || dims.repr_dim == 0 ||
      dims.num_classes < 2)
    throw std::invalid_argument("model dims: all dimensions must be positive, num_classes >= 2");
}

Vec gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale,
                    std::size_t fan_in) {
  double stddev = scale / std::sqrt(static_cast<double>(fan_in));
  Vec m(rows * cols);
  for (double& x : m) x = stddev * rng.normal();
  return m;
}

}  // namespace

LabelEmbedding init_label_embedding(std::size_t num_classes, std::size_t repr_dim) {
  // Zero start: the confusion distribution begins uniform, which makes the
  // comparator reduce to label smoothing until E learns structure.
  LabelEmbedding emb;
  emb.num_classes = num_classes;
  emb.repr_dim = repr_dim;
  emb.E.assign(num_classes * repr_dim, 0.0);
  return emb;
}

RelationModel init_model(const ModelDims& dims, std::uint64_t seed, double scale,
                         ModelVariant variant, double tau) {
  check_dims(dims);
  if (!(scale >= 0.0)) throw std::invalid_argument("init_model: scale must be nonnegative");
  if (!(tau > 0.0)) throw std::invalid_argument("init_model: tau must be positive");

  Rng rng(seed);
  RelationModel model;
  model.dims = dims;
  model.tau = tau;
  model.variant = variant;
  model.encoder.W1 = gaussian_matrix(rng, dims.hidden_dim, dims.feature_dim, scale,
                                     dims.feature_dim);
  model.encoder.b1.assign(dims.hidden_dim, 0.0);
  model.encoder.W2 = gaussian_matrix(rng, dims.repr_dim, dims.hidden_dim, scale,
                                     dims.hidden_dim);
  model.encoder.b2.assign(dims.repr_dim, 0.0);
  model.student_head.W = gaussian_matrix(rng, dims.repr_dim, dims.num_classes, scale,
                                         dims.repr_dim);
  model.student_head.sigma.assign(dims.num_classes, 0.0);
  if (variant == ModelVariant::siamese) {
    HeadParams teacher;
    teacher.W = gaussian_matrix(rng, dims.repr_dim, dims.num_classes, scale, dims.repr_dim);
    teacher.sigma.assign(dims.num_classes, 0.0);
    model.teacher_head = std::move(teacher);
  }
  return model;
}

EncodeTrace encode_trace(const EncoderParams& enc, const ModelDims& dims, const Vec& feature) {
  if (feature.size() != dims.feature_dim)
    throw std::invalid_argument("encode: feature dimension mismatch");
  EncodeTrace trace;
  trace.hidden.resize(dims.hidden_dim);
  for (std::size_t h = 0; h < dims.hidden_dim; ++h) {
    double acc = enc.b1[h];
    const double* row = &enc.W1[h * dims.feature_dim];
    for (std::size_t i = 0; i < dims.feature_dim; ++i) acc += row[i] * feature[i];
    trace.hidden[h] = std::tanh(acc);
  }
  trace.repr.resize(dims.repr_dim);
  for (std::size_t r = 0; r < dims.repr_dim; ++r) {
    double acc = enc.b2[r];
    const double* row = &enc.W2[r * dims.hidden_dim];
    for (std::size_t h = 0; h < dims.hidden_dim; ++h) acc += row[h] * trace.hidden[h];
    trace.repr[r] = std::tanh(acc);
  }
  return trace;
}

Vec encode(const EncoderParams& enc, const ModelDims& dims, const Vec& feature) {
  return encode_trace(enc, dims, feature).repr;
}

HeadOutput head_forward(const HeadParams& head, const Vec& repr, double tau) {
  std::size_t num_classes = head.sigma.size();
  if (head.W.size() != repr.size() * num_classes)
    throw std::invalid_argument("head_forward: weight/repr dimension mismatch");
  HeadOutput out;
  out.logits.values = head.sigma;
  for (std::size_t d = 0; d < repr.size(); ++d) {
    const double* row = &head.W[d * num_classes];
    double rd = repr[d];
    for (std::size_t c = 0; c < num_classes; ++c) out.logits.values[c] += row[c] * rd;
  }
  out.probs = softmax_t(out.logits, tau);
  return out;
}

TeacherSnapshot take_snapshot(const RelationModel& model, double created_at) {
  TeacherSnapshot snap;
  snap.encoder = model.encoder;
  snap.head = model.student_head;
  snap.tau = model.tau;
  snap.created_at = created_at;
  return snap;
}

ProbabilityVector snapshot_forward(const TeacherSnapshot& snap, const ModelDims& dims,
                                   const Vec& feature) {
  Vec repr = encode(snap.encoder, dims, feature);
  return head_forward(snap.head, repr, snap.tau).probs;
}

namespace {

std::uint64_t hash_arrays(std::initializer_list<const Vec*> arrays) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Vec* a : arrays) h = fnv1a64(std::span<const double>(*a), h);
  return h;
}

}  // namespace

std::uint64_t param_hash(const RelationModel& model) {
  std::uint64_t h = hash_arrays({&model.encoder.W1, &model.encoder.b1, &model.encoder.W2,
                                 &model.encoder.b2, &model.student_head.W,
                                 &model.student_head.sigma});
  if (model.teacher_head) {
    h = fnv1a64(std::span<const double>(model.teacher_head->W), h);
    h = fnv1a64(std::span<const double>(model.teacher_head->sigma), h);
  }
  return h;
}

std::uint64_t snapshot_hash(const TeacherSnapshot& snap) {
  return hash_arrays({&snap.encoder.W1, &snap.encoder.b1, &snap.encoder.W2, &snap.encoder.b2,
                      &snap.head.W, &snap.head.sigma});
}

namespace {

constexpr int kCheckpointSchemaVersion = 1;

}  // namespace

void save_checkpoint(const RelationModel& model, const std::string& path) {
  ordered_json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["kind"] = "lskd.checkpoint";
  j["dims"] = {{"feature_dim", model.dims.feature_dim},
               {"hidden_dim", model.dims.hidden_dim},
               {"repr_dim", model.dims.repr_dim},
               {"num_classes", model.dims.num_classes}};
  j["tau"] = model.tau;
  j["variant"] = variant_name(model.variant);
  ordered_json params;
  params["encoder_W1"] = model.encoder.W1;
  params["encoder_b1"] = model.encoder.b1;
  params["encoder_W2"] = model.encoder.W2;
  params["encoder_b2"] = model.encoder.b2;
  params["student_W"] = model.student_head.W;
  params["student_sigma"] = model.student_head.sigma;
  if (model.teacher_head) {
    params["teacher_W"] = model.teacher_head->W;
    params["teacher_sigma"] = model.teacher_head->sigma;
  }
  j["params"] = std::move(params);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open '" + path + "' for writing");
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("save_checkpoint: write to '" + path + "' failed");
}

RelationModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  ordered_json j;
  try {
    in >> j;
  } catch (const ordered_json::exception& e) {
    throw std::runtime_error("load_checkpoint: parse error in '" + path + "': " + e.what());
  }
  try {
    int version = j.at("schema_version").get<int>();
    if (version != kCheckpointSchemaVersion)
      throw std::runtime_error("load_checkpoint: schema version mismatch, file has version " +
                               std::to_string(version));
    RelationModel model;
    const ordered_json& dims = j.at("dims");
    model.dims.feature_dim = dims.at("feature_dim").get<std::size_t>();
    model.dims.hidden_dim = dims.at("hidden_dim").get<std::size_t>();
    model.dims.repr_dim = dims.at("repr_dim").get<std::size_t>();
    model.dims.num_classes = dims.at("num_classes").get<std::size_t>();
    check_dims(model.dims);
    model.tau = j.at("tau").get<double>();
    model.variant = parse_variant(j.at("variant").get<std::string>());
    const ordered_json& params = j.at("params");
    model.encoder.W1 = params.at("encoder_W1").get<Vec>();
    model.encoder.b1 = params.at("encoder_b1").get<Vec>();
    model.encoder.W2 = params.at("encoder_W2").get<Vec>();
    model.encoder.b2 = params.at("encoder_b2").get<Vec>();
    model.student_head.W = params.at("student_W").get<Vec>();
    model.student_head.sigma = params.at("student_sigma").get<Vec>();
    if (model.variant == ModelVariant::siamese) {
      HeadParams teacher;
      teacher.W = params.at("teacher_W").get<Vec>();
      teacher.sigma = params.at("teacher_sigma").get<Vec>();
      model.teacher_head = std::move(teacher);
    }

    const ModelDims& d = model.dims;
    if (model.encoder.W1.size() != d.hidden_dim * d.feature_dim ||
        model.encoder.b1.size() != d.hidden_dim ||
        model.encoder.W2.size() != d.repr_dim * d.hidden_dim ||
        model.encoder.b2.size() != d.repr_dim ||
        model.student_head.W.size() != d.repr_dim * d.num_classes ||
        model.student_head.sigma.size() != d.num_classes ||
        (model.teacher_head &&
         (model.teacher_head->W.size() != d.repr_dim * d.num_classes ||
          model.teacher_head->sigma.size() != d.num_classes)))
      throw std::runtime_error("load_checkpoint: parameter array sizes do not match dims");
    return model;
  } catch (const ordered_json::exception& e) {
    throw std::runtime_error("load_checkpoint: malformed checkpoint '" + path + "': " +
                             e.what());
  }
}

}  // namespace lskd
