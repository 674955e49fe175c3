#include "vlogloc/features.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vlogloc/binary_io.hpp"
#include "vlogloc/error.hpp"

namespace vlogloc {

void EmbeddingTable::add(std::string id, std::span<const float> values) {
  if (values.size() != dim_) {
    throw Error(ErrorCode::DimensionMismatch, "embedding '" + id + "' has " + std::to_string(values.size()) +
                                                  " components, table dim is " + std::to_string(dim_));
  }
  if (!std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::NumericFailure, "embedding '" + id + "' has non-finite components");
  }
  if (index_.contains(id)) throw Error(ErrorCode::DuplicateId, "duplicate embedding id '" + id + "'");
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  values_.insert(values_.end(), values.begin(), values.end());
}

void EmbeddingTable::add(std::string id, const Eigen::VectorXd& values) {
  const Eigen::VectorXf as_float = values.cast<float>();
  add(std::move(id), std::span<const float>(as_float.data(), static_cast<std::size_t>(as_float.size())));
}

bool EmbeddingTable::contains(std::string_view id) const { return index_.contains(std::string(id)); }

std::optional<std::span<const float>> EmbeddingTable::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return std::span<const float>(values_.data() + it->second * dim_, dim_);
}

Eigen::VectorXd EmbeddingTable::vector(std::string_view id) const {
  const auto row = find(id);
  if (!row) throw Error(ErrorCode::MissingEmbedding, "no embedding for '" + std::string(id) + "'");
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < dim_; ++i) v[static_cast<Eigen::Index>(i)] = (*row)[i];
  return v;
}

std::string encode_embeddings(const EmbeddingTable& table) {
  io::ByteWriter out;
  out.bytes("EMB1");
  out.u32(static_cast<std::uint32_t>(table.size()));
  out.u32(static_cast<std::uint32_t>(table.dim()));
  for (const auto& id : table.ids()) {
    if (id.size() > 0xffff) throw Error(ErrorCode::Config, "embedding id longer than 65535 bytes");
    out.u16(static_cast<std::uint16_t>(id.size()));
    out.bytes(id);
    const auto row = *table.find(id);
    for (float v : row) out.f32(v);
  }
  return out.data();
}

EmbeddingTable decode_embeddings(std::string_view bytes, Modality modality) {
  io::ByteReader in{std::string(bytes)};
  if (in.remaining() < 4 || in.bytes(4) != "EMB1") throw Error(ErrorCode::BadMagic, "not an EMB1 file");
  const auto count = in.u32();
  const auto dim = in.u32();
  if (dim == 0 && count > 0) throw Error(ErrorCode::DimensionMismatch, "EMB1 declares dim 0");
  EmbeddingTable table(dim, modality);
  std::vector<float> row(dim);
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto id_len = in.u16();
    auto id = in.bytes(id_len);
    for (auto& v : row) v = in.f32();
    table.add(std::move(id), row);
  }
  if (in.remaining() != 0) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(in.remaining()) + " trailing bytes after the declared records");
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, Modality modality) {
  try {
    return decode_embeddings(io::read_file(path), modality);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  io::write_file(path, encode_embeddings(table));
}

EmbeddingTable projection_to_table(const Eigen::MatrixXd& projection) {
  EmbeddingTable table(static_cast<std::size_t>(projection.cols()), Modality::Text);
  for (Eigen::Index r = 0; r < projection.rows(); ++r) {
    table.add("r" + std::to_string(r), Eigen::VectorXd(projection.row(r).transpose()));
  }
  return table;
}

Eigen::MatrixXd projection_from_table(const EmbeddingTable& table) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(table.size()), static_cast<Eigen::Index>(table.dim()));
  for (std::size_t r = 0; r < table.size(); ++r) {
    m.row(static_cast<Eigen::Index>(r)) = table.vector("r" + std::to_string(r)).transpose();
  }
  return m;
}

std::string make_span_id(std::string_view clip_id, double start_seconds) {
  return std::string(clip_id) + "#" + std::to_string(to_ms(start_seconds));
}

std::string SpanGrid::span_id(std::size_t k) const { return make_span_id(clip_id, spans.at(k).start); }

SpanGrid generate_spans(const TimeInterval& clip, double span_len, double stride, std::string clip_id) {
  if (!clip.valid() || !(span_len > 0.0) || !(stride > 0.0)) {
    throw Error(ErrorCode::Config, "span grid needs a valid clip and positive span length and stride");
  }
  SpanGrid grid{std::move(clip_id), clip, span_len, stride, {}};
  const auto start_ms = to_ms(clip.start);
  const auto end_ms = to_ms(clip.end);
  const auto len_ms = to_ms(span_len);
  const auto stride_ms = std::max<std::int64_t>(1, to_ms(stride));
  if (end_ms - start_ms < len_ms) {
    grid.spans.push_back(clip);
    return grid;
  }
  for (auto s = start_ms; s + len_ms <= end_ms; s += stride_ms) {
    grid.spans.push_back({from_ms(s), from_ms(s + len_ms)});
  }
  return grid;
}

namespace {

double ms_round(double seconds) { return from_ms(to_ms(seconds)); }

}  // namespace

SyntheticDataset synth_generate(const SyntheticConfig& cfg) {
  if (cfg.text_dim == 0 || cfg.video_dim == 0 || cfg.noise_sigma < 0.0 || !(cfg.clip_len > 0.0)) {
    throw Error(ErrorCode::Config, "synthetic config needs positive dims and clip length, noise >= 0");
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SyntheticDataset data;
  data.text = EmbeddingTable(cfg.text_dim, Modality::Text);
  data.video = EmbeddingTable(cfg.video_dim, Modality::VideoSpan);

  const auto td = static_cast<Eigen::Index>(cfg.text_dim);
  const auto vd = static_cast<Eigen::Index>(cfg.video_dim);
  data.projection.resize(vd, td);
  const double m_scale = 1.0 / std::sqrt(static_cast<double>(cfg.text_dim));
  for (Eigen::Index r = 0; r < vd; ++r)
    for (Eigen::Index c = 0; c < td; ++c) data.projection(r, c) = m_scale * normal(rng);

  for (std::size_t i = 0; i < cfg.n_clips; ++i) {
    const std::string video_id = "v" + std::to_string(i);
    const std::string clip_id = video_id + "_c0";
    const TimeInterval clip{0.0, cfg.clip_len};

    const bool visible = unit(rng) >= cfg.nonvisible_fraction;
    const bool is_long = unit(rng) < cfg.long_fraction;

    ManifestRecord rec;
    rec.action_id = video_id + "_a0";
    rec.video_id = video_id;
    rec.clip_id = clip_id;
    rec.channel_id = "ch" + std::to_string(i % std::max<std::size_t>(1, cfg.n_channels));
    rec.video_duration_ms = to_ms(cfg.clip_len);

    std::optional<TimeInterval> gold;
    TimeInterval cue;
    if (visible) {
      double dur = is_long ? uniform(cfg.long_min, cfg.long_max) : uniform(cfg.short_min, cfg.short_max);
      dur = std::min(dur, cfg.clip_len);
      const double start = ms_round(uniform(0.0, cfg.clip_len - dur));
      gold = TimeInterval{start, ms_round(std::min(cfg.clip_len, start + dur))};
      if (!is_long) {
        const double shift = uniform(-cfg.sync_jitter, cfg.sync_jitter);
        const double cs = std::clamp(gold->start + shift, 0.0, cfg.clip_len);
        cue = {ms_round(cs), ms_round(std::clamp(gold->end + shift, cs, cfg.clip_len))};
      } else {
        const double len = uniform(cfg.long_cue_min, cfg.long_cue_max);
        const double cs = std::clamp(gold->start + uniform(-cfg.long_drift, cfg.long_drift), 0.0,
                                     std::max(0.0, cfg.clip_len - len));
        cue = {ms_round(cs), ms_round(std::min(cfg.clip_len, cs + len))};
      }
      rec.gold_visible = true;
      rec.gold_start_ms = to_ms(gold->start);
      rec.gold_end_ms = to_ms(gold->end);
    } else {
      const double len = uniform(cfg.long_cue_min, cfg.long_cue_max);
      const double cs = ms_round(uniform(0.0, std::max(0.0, cfg.clip_len - len)));
      cue = {cs, ms_round(std::min(cfg.clip_len, cs + len))};
      rec.gold_visible = false;
    }
    rec.cue_start_ms = to_ms(cue.start);
    rec.cue_end_ms = to_ms(cue.end);
    rec.text = std::string(visible ? (is_long ? "long" : "short") : "unseen") + " synthetic action " +
               std::to_string(i);

    Eigen::VectorXd t(td);
    for (Eigen::Index k = 0; k < td; ++k) t[k] = normal(rng);
    const bool cue_short = visible ? !is_long : unit(rng) < 0.5;
    t[0] += cue_short ? cfg.duration_cue : -cfg.duration_cue;
    data.text.add(rec.action_id, t);

    const Eigen::VectorXd signal = cfg.signal_gain * (data.projection * t);
    const auto grid = generate_spans(clip, cfg.span_len, cfg.stride, clip_id);
    for (std::size_t k = 0; k < grid.spans.size(); ++k) {
      const auto& span = grid.spans[k];
      const double coverage =
          gold && span.duration() > 0.0 ? intersection_length(span, *gold) / span.duration() : 0.0;
      Eigen::VectorXd v = coverage * signal;
      if (cfg.noise_sigma > 0.0) {
        for (Eigen::Index c = 0; c < vd; ++c) v[c] += cfg.noise_sigma * normal(rng);
      }
      data.video.add(grid.span_id(k), v);
    }

    data.clips.push_back(ClipSpec{clip_id, video_id, clip, {rec.action_id}});
    data.manifest.push_back(std::move(rec));
  }
  return data;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticDataset& data) {
  std::filesystem::create_directories(dir);
  write_manifest(dir / "manifest.jsonl", data.manifest);
  write_clips(dir / "clips.jsonl", data.clips);
  save_embeddings(dir / "text.emb", data.text);
  save_embeddings(dir / "video.emb", data.video);
  save_embeddings(dir / "projection.emb", projection_to_table(data.projection));
}

}  // namespace vlogloc
