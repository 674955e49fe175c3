#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vlogloc/chrono.hpp"
#include "vlogloc/dataprep.hpp"
#include "vlogloc/transcript.hpp"

namespace vlogloc {

enum class Modality { Text, VideoSpan };

// Immutable-after-load map from id to a fixed-width float vector.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t dim, Modality modality) : dim_(dim), modality_(modality) {}

  // Throws DimensionMismatch, DuplicateId, or NumericFailure for non-finite input.
  void add(std::string id, std::span<const float> values);
  void add(std::string id, const Eigen::VectorXd& values);

  std::size_t dim() const noexcept { return dim_; }
  Modality modality() const noexcept { return modality_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  bool contains(std::string_view id) const;
  std::optional<std::span<const float>> find(std::string_view id) const;
  // Throws MissingEmbedding.
  Eigen::VectorXd vector(std::string_view id) const;

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.values_ == b.values_;
  }

 private:
  std::size_t dim_ = 0;
  Modality modality_ = Modality::Text;
  std::vector<std::string> ids_;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// EMB1: "EMB1", u32 count, u32 dim, then per record u16 id length, id bytes,
// dim little-endian f32.
std::string encode_embeddings(const EmbeddingTable& table);
EmbeddingTable decode_embeddings(std::string_view bytes, Modality modality = Modality::Text);
EmbeddingTable load_embeddings(const std::filesystem::path& path, Modality modality = Modality::Text);
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

// A dense projection stored as an EMB1 table with one record per row ("r<k>").
EmbeddingTable projection_to_table(const Eigen::MatrixXd& projection);
Eigen::MatrixXd projection_from_table(const EmbeddingTable& table);

inline constexpr double kDefaultSpanLength = 3.0;
inline constexpr double kDefaultSpanStride = 1.0;

struct SpanGrid {
  std::string clip_id;
  TimeInterval clip;
  double span_len = kDefaultSpanLength;
  double stride = kDefaultSpanStride;
  std::vector<TimeInterval> spans;

  std::string span_id(std::size_t k) const;
};

// "<clip_id>#<start_ms>"
std::string make_span_id(std::string_view clip_id, double start_seconds);

// Spans start at clip.start + k*stride while they fit. A clip shorter than
// span_len gets a single span equal to the clip. Arithmetic is on integer ms.
SpanGrid generate_spans(const TimeInterval& clip, double span_len = kDefaultSpanLength,
                        double stride = kDefaultSpanStride, std::string clip_id = {});

struct SyntheticConfig {
  std::size_t n_clips = 200;
  double clip_len = 60.0;
  std::size_t text_dim = 32;
  std::size_t video_dim = 32;
  double signal_gain = 1.0;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;

  double nonvisible_fraction = 0.25;
  double long_fraction = 0.5;        // share of visible actions longer than 15 s
  double short_min = 2.0, short_max = 15.0;
  double long_min = 16.0, long_max = 55.0;
  double duration_cue = 2.0;         // offset on text component 0: +cue short, -cue long
  double sync_jitter = 0.5;          // short actions: cue = gold shifted by up to this
  double long_cue_min = 2.0, long_cue_max = 5.0;  // long actions: a brief utterance...
  double long_drift = 20.0;          // ...placed up to this far from the gold start
  std::size_t n_channels = 10;
  double span_len = kDefaultSpanLength;
  double stride = kDefaultSpanStride;
};

struct SyntheticDataset {
  std::vector<ManifestRecord> manifest;
  std::vector<ClipSpec> clips;
  EmbeddingTable text;
  EmbeddingTable video;
  Eigen::MatrixXd projection;  // video_dim x text_dim planted map
};

// One action per clip. A span's vector is coverage * gain * M t + noise where
// coverage is the fraction of the span inside the gold interval (zero for
// non-visible actions). Deterministic in the seed.
SyntheticDataset synth_generate(const SyntheticConfig& config);

// Writes manifest.jsonl, clips.jsonl, text.emb, video.emb, projection.emb.
void write_synthetic(const std::filesystem::path& dir, const SyntheticDataset& data);

}  // namespace vlogloc
