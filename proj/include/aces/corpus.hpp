#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aces::corpus {

struct Utterance {
    std::string id;
    std::string accent;
    std::string speaker_id;
    std::vector<int> text;          // token ids over the corpus vocabulary
    std::vector<double> waveform;   // samples in [-1, 1]
    int sample_rate = 8000;
    std::string split;              // train | validation | eval
};

struct AccentTransform {
    std::string accent;
    double pitch_scale = 1.0;     // multiplies formant frequencies
    double spectral_tilt = 0.0;   // dB per octave around 500 Hz
    double duration_scale = 1.0;  // multiplies segment lengths
    double noise_floor = 0.002;   // linear amplitude of additive noise
};

struct CorpusConfig {
    int n_accents = 7;
    int utterances_per_accent_eval = 100;
    int utterances_per_accent_val = 20;
    int train_size = 1200;
    double train_skew = 0.7;  // probability mass on the reference accent
    int vocab_size = 12;
    int sample_rate = 8000;
    int min_text_len = 3;
    int max_text_len = 5;
    double token_duration_s = 0.060;
    double token_gap_s = 0.012;
    double edge_pad_s = 0.020;
    std::uint64_t seed = 42;
};

struct ManifestRow {
    std::string audio_path;  // relative to the manifest file
    std::string accent;
    std::vector<int> text;
    std::string speaker_id;
    std::string split;
};

struct Manifest {
    std::vector<ManifestRow> rows;
};

std::string accent_label(int accent_index);
int accent_index(const std::string& label, int n_accents);

// Reference accent (index 0) is acoustically neutral; the rest spread
// symmetrically away from it. Base transform before per-utterance jitter.
AccentTransform accent_transform(int accent_index, const CorpusConfig& config);

std::uint64_t utterance_seed(std::uint64_t corpus_seed, const std::string& utterance_id);
std::uint64_t speaker_seed(std::uint64_t corpus_seed, const std::string& speaker_id);

// Pure function of (text, accent, seeds, config): formant-stack synthesis per
// token with the accent's pitch/tilt/duration transform, additive seeded
// noise, peak-normalized to 0.9.
std::vector<double> synthesize_waveform(const std::vector<int>& text,
                                        const std::string& accent,
                                        std::uint64_t utt_seed,
                                        std::uint64_t spk_seed,
                                        const CorpusConfig& config);

Utterance synthesize_utterance(const std::vector<int>& text,
                               const std::string& accent,
                               std::uint64_t utt_seed,
                               std::uint64_t spk_seed,
                               const CorpusConfig& config);

// Deterministically plans and synthesizes the whole corpus. Eval split is
// accent-balanced; train accents drawn with train_skew mass on the reference
// accent; speakers never cross splits. jobs parallelizes waveform synthesis
// only (outputs independent of scheduling).
std::vector<Utterance> generate_corpus(const CorpusConfig& config, int jobs = 1);

Manifest manifest_from(const std::vector<Utterance>& utterances);

void save_manifest(const Manifest& manifest, const std::string& path,
                   const std::string& meta_comment = "");
Manifest load_manifest(const std::string& path);

void save_audio_f32(const std::vector<double>& waveform, const std::string& path);
std::vector<double> load_audio_f32(const std::string& path);

// Writes manifest plus one raw f32le mono file per utterance under
// dir/audio/, returns the manifest path.
std::string save_corpus(const std::vector<Utterance>& utterances, const std::string& dir,
                        const std::string& meta_comment = "");
std::vector<Utterance> load_corpus(const std::string& manifest_path);

void validate(const CorpusConfig& config);

}  // namespace aces::corpus
