#include "aces/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "aces/errors.hpp"
#include "aces/parallel.hpp"
#include "aces/rng.hpp"

namespace fs = std::filesystem;

namespace aces::corpus {

namespace {

constexpr double kPeakTarget = 0.9;
constexpr double kTiltRefHz = 500.0;

struct TokenTimbre {
    double freq[3];
    double amp[3];
    double phase[3];
};

// Per-token formant stack, fixed given (corpus seed, token id).
TokenTimbre token_timbre(int token, std::uint64_t corpus_seed) {
    Rng rng(hash_combine(hash_combine(corpus_seed, hash_string("token-table")),
                         static_cast<std::uint64_t>(token)));
    TokenTimbre t;
    t.freq[0] = rng.uniform(320.0, 900.0);
    t.freq[1] = rng.uniform(950.0, 1900.0);
    t.freq[2] = rng.uniform(2000.0, 3300.0);
    t.amp[0] = 1.0;
    t.amp[1] = 0.55;
    t.amp[2] = 0.30;
    for (int i = 0; i < 3; ++i) t.phase[i] = rng.uniform(0.0, 2.0 * M_PI);
    return t;
}

double accent_deviation(int accent_index, int n_accents) {
    if (accent_index == 0) return 0.0;
    if (n_accents == 2) return 1.0;
    // indices 1..A-1 spread over [-1, 1]
    return -1.0 + 2.0 * static_cast<double>(accent_index - 1) /
                      static_cast<double>(n_accents - 2);
}

}  // namespace

std::string accent_label(int accent_index) {
    return "a" + std::to_string(accent_index);
}

int accent_index(const std::string& label, int n_accents) {
    if (label.size() < 2 || label[0] != 'a') {
        throw ConfigError("unknown accent label: " + label);
    }
    int idx = -1;
    try {
        idx = std::stoi(label.substr(1));
    } catch (const std::exception&) {
        throw ConfigError("unknown accent label: " + label);
    }
    if (idx < 0 || idx >= n_accents) {
        throw ConfigError("accent label out of range: " + label);
    }
    return idx;
}

AccentTransform accent_transform(int accent_index, const CorpusConfig& config) {
    const double dev = accent_deviation(accent_index, config.n_accents);
    AccentTransform t;
    t.accent = accent_label(accent_index);
    t.pitch_scale = 1.0 + 0.10 * dev;
    t.spectral_tilt = 4.5 * dev;
    t.duration_scale = 1.0 + 0.08 * dev;
    t.noise_floor = 0.002 + 0.006 * std::abs(dev);
    return t;
}

std::uint64_t utterance_seed(std::uint64_t corpus_seed, const std::string& utterance_id) {
    return hash_combine(corpus_seed, hash_string(utterance_id));
}

std::uint64_t speaker_seed(std::uint64_t corpus_seed, const std::string& speaker_id) {
    return hash_combine(hash_combine(corpus_seed, hash_string("speaker")),
                        hash_string(speaker_id));
}

std::vector<double> synthesize_waveform(const std::vector<int>& text,
                                        const std::string& accent,
                                        std::uint64_t utt_seed,
                                        std::uint64_t spk_seed,
                                        const CorpusConfig& config) {
    if (text.empty()) {
        throw ConfigError("synthesize_waveform: empty text");
    }
    for (int tok : text) {
        if (tok < 0 || tok >= config.vocab_size) {
            throw ConfigError("synthesize_waveform: token id out of vocabulary: " +
                              std::to_string(tok));
        }
    }
    const int aidx = accent_index(accent, config.n_accents);
    AccentTransform base = accent_transform(aidx, config);

    // per-utterance jitter keeps within-accent variance non-degenerate
    Rng jit(hash_combine(utt_seed, hash_string("jitter")));
    AccentTransform t = base;
    t.pitch_scale *= 1.0 + 0.015 * jit.gaussian();
    t.spectral_tilt += 0.5 * jit.gaussian();
    t.duration_scale *= 1.0 + 0.02 * jit.gaussian();
    t.noise_floor *= jit.uniform(0.8, 1.25);
    t.pitch_scale = std::max(0.5, t.pitch_scale);
    t.duration_scale = std::max(0.5, t.duration_scale);
    t.noise_floor = std::max(1e-4, t.noise_floor);

    Rng spk(spk_seed);
    const double speaker_pitch = 1.0 + 0.02 * spk.gaussian();

    const double sr = static_cast<double>(config.sample_rate);
    const auto pad = static_cast<std::size_t>(std::lround(config.edge_pad_s * sr));
    const auto gap = static_cast<std::size_t>(
        std::lround(config.token_gap_s * sr * t.duration_scale));
    const auto seg = static_cast<std::size_t>(
        std::lround(config.token_duration_s * sr * t.duration_scale));

    std::vector<double> wave;
    wave.reserve(2 * pad + text.size() * (seg + gap));
    wave.insert(wave.end(), pad, 0.0);

    for (std::size_t ti = 0; ti < text.size(); ++ti) {
        const TokenTimbre timbre = token_timbre(text[ti], config.seed);
        const std::size_t start = wave.size();
        wave.insert(wave.end(), seg + gap, 0.0);
        for (std::size_t n = 0; n < seg; ++n) {
            // Hann envelope over the voiced part of the segment
            const double env =
                0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(n) /
                                      static_cast<double>(seg > 1 ? seg - 1 : 1)));
            double s = 0.0;
            for (int i = 0; i < 3; ++i) {
                const double freq = timbre.freq[i] * t.pitch_scale * speaker_pitch;
                const double tilt_gain =
                    std::pow(10.0, t.spectral_tilt * std::log2(freq / kTiltRefHz) / 20.0);
                s += timbre.amp[i] * tilt_gain *
                     std::sin(2.0 * M_PI * freq * static_cast<double>(n) / sr +
                              timbre.phase[i]);
            }
            wave[start + n] = env * s;
        }
    }
    wave.insert(wave.end(), pad, 0.0);

    Rng noise(hash_combine(utt_seed, hash_string("noise")));
    for (double& s : wave) s += t.noise_floor * noise.gaussian();

    double peak = 0.0;
    for (double s : wave) peak = std::max(peak, std::abs(s));
    const double scale = kPeakTarget / peak;
    for (double& s : wave) s *= scale;
    return wave;
}

Utterance synthesize_utterance(const std::vector<int>& text,
                               const std::string& accent,
                               std::uint64_t utt_seed,
                               std::uint64_t spk_seed,
                               const CorpusConfig& config) {
    Utterance u;
    u.accent = accent;
    u.text = text;
    u.sample_rate = config.sample_rate;
    u.waveform = synthesize_waveform(text, accent, utt_seed, spk_seed, config);
    return u;
}

void validate(const CorpusConfig& config) {
    if (config.n_accents < 2) throw ConfigError("corpus: n_accents must be >= 2");
    if (config.vocab_size < 2) throw ConfigError("corpus: vocab_size must be >= 2");
    if (config.utterances_per_accent_eval < 1 || config.utterances_per_accent_val < 1 ||
        config.train_size < 1) {
        throw ConfigError("corpus: split sizes must be positive");
    }
    if (config.min_text_len < 1 || config.max_text_len < config.min_text_len) {
        throw ConfigError("corpus: invalid text length range");
    }
    const double lo = 1.0 / static_cast<double>(config.n_accents);
    if (config.train_skew < lo - 1e-12 || config.train_skew > 1.0 + 1e-12) {
        throw ConfigError("corpus: train_skew must lie in [1/n_accents, 1]");
    }
    if (config.sample_rate < 2000) throw ConfigError("corpus: sample_rate too low");
}

namespace {

struct UtterancePlan {
    std::string id;
    int accent = 0;
    std::string speaker;
    std::vector<int> text;
    std::string split;
};

std::vector<int> draw_text(Rng& rng, const CorpusConfig& config) {
    const int len = config.min_text_len +
                    static_cast<int>(rng.uniform_index(
                        static_cast<std::uint64_t>(config.max_text_len - config.min_text_len + 1)));
    std::vector<int> text(static_cast<std::size_t>(len));
    for (int& tok : text) {
        tok = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(config.vocab_size)));
    }
    return text;
}

// speakers per accent per split; indices give disjoint pools
constexpr int kTrainSpeakers = 6;
constexpr int kValSpeakers = 2;
constexpr int kEvalSpeakers = 3;

std::string speaker_name(int accent, const std::string& split, int k) {
    int base = 0;
    if (split == "validation") base = kTrainSpeakers;
    if (split == "eval") base = kTrainSpeakers + kValSpeakers;
    return accent_label(accent) + "_s" + std::to_string(base + k);
}

}  // namespace

std::vector<Utterance> generate_corpus(const CorpusConfig& config, int jobs) {
    validate(config);

    std::vector<UtterancePlan> plans;
    plans.reserve(static_cast<std::size_t>(config.train_size) +
                  static_cast<std::size_t>(config.n_accents) *
                      static_cast<std::size_t>(config.utterances_per_accent_val +
                                               config.utterances_per_accent_eval));

    const double skew = config.train_skew;
    const double rest = (1.0 - skew) / static_cast<double>(config.n_accents - 1);
    (void)rest;

    for (int k = 0; k < config.train_size; ++k) {
        Rng rng(hash_combine(hash_combine(config.seed, hash_string("train-plan")),
                             static_cast<std::uint64_t>(k)));
        int accent = 0;
        if (rng.uniform() >= skew) {
            accent = 1 + static_cast<int>(rng.uniform_index(
                             static_cast<std::uint64_t>(config.n_accents - 1)));
        }
        UtterancePlan p;
        p.accent = accent;
        p.split = "train";
        p.id = "tr-" + accent_label(accent) + "-" + std::to_string(k);
        p.speaker = speaker_name(accent, "train",
                                 static_cast<int>(rng.uniform_index(kTrainSpeakers)));
        p.text = draw_text(rng, config);
        plans.push_back(std::move(p));
    }

    auto add_balanced = [&](const std::string& split, int per_accent, int n_speakers,
                            const char* tag) {
        for (int a = 0; a < config.n_accents; ++a) {
            for (int k = 0; k < per_accent; ++k) {
                UtterancePlan p;
                p.accent = a;
                p.split = split;
                p.id = std::string(tag) + "-" + accent_label(a) + "-" + std::to_string(k);
                Rng rng(hash_combine(config.seed, hash_string(p.id)));
                p.speaker = speaker_name(a, split,
                                         static_cast<int>(rng.uniform_index(
                                             static_cast<std::uint64_t>(n_speakers))));
                p.text = draw_text(rng, config);
                plans.push_back(std::move(p));
            }
        }
    };
    add_balanced("validation", config.utterances_per_accent_val, kValSpeakers, "va");
    add_balanced("eval", config.utterances_per_accent_eval, kEvalSpeakers, "ev");

    std::vector<Utterance> out(plans.size());
    parallel_for(plans.size(), jobs, [&](std::size_t i) {
        const UtterancePlan& p = plans[i];
        const std::uint64_t useed = utterance_seed(config.seed, p.id);
        const std::uint64_t sseed = speaker_seed(config.seed, p.speaker);
        Utterance u = synthesize_utterance(p.text, accent_label(p.accent), useed, sseed, config);
        u.id = p.id;
        u.speaker_id = p.speaker;
        u.split = p.split;
        out[i] = std::move(u);
    });

    // split hygiene is structural, but verify anyway
    std::set<std::string> train_spk, val_spk, eval_spk;
    for (const auto& u : out) {
        if (u.split == "train") train_spk.insert(u.speaker_id);
        else if (u.split == "validation") val_spk.insert(u.speaker_id);
        else eval_spk.insert(u.speaker_id);
    }
    for (const auto& s : train_spk) {
        if (val_spk.count(s) || eval_spk.count(s)) {
            throw NumericalError("generate_corpus: speaker crosses splits: " + s);
        }
    }
    for (const auto& s : val_spk) {
        if (eval_spk.count(s)) {
            throw NumericalError("generate_corpus: speaker crosses splits: " + s);
        }
    }
    return out;
}

Manifest manifest_from(const std::vector<Utterance>& utterances) {
    Manifest m;
    m.rows.reserve(utterances.size());
    for (const auto& u : utterances) {
        ManifestRow r;
        r.audio_path = "audio/" + u.id + ".f32";
        r.accent = u.accent;
        r.text = u.text;
        r.speaker_id = u.speaker_id;
        r.split = u.split;
        m.rows.push_back(std::move(r));
    }
    return m;
}

namespace {

std::string join_tokens(const std::vector<int>& text) {
    std::string s;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (i) s += ' ';
        s += std::to_string(text[i]);
    }
    return s;
}

std::vector<int> parse_tokens(const std::string& s, std::size_t line_no) {
    std::vector<int> toks;
    std::istringstream iss(s);
    std::string piece;
    while (iss >> piece) {
        try {
            toks.push_back(std::stoi(piece));
        } catch (const std::exception&) {
            throw ConfigError("manifest line " + std::to_string(line_no) +
                              ": bad token id '" + piece + "'");
        }
    }
    if (toks.empty()) {
        throw ConfigError("manifest line " + std::to_string(line_no) + ": empty text");
    }
    return toks;
}

}  // namespace

void save_manifest(const Manifest& manifest, const std::string& path,
                   const std::string& meta_comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("save_manifest: cannot open " + path);
    if (!meta_comment.empty()) out << "# " << meta_comment << "\n";
    out << "audio_path,accent,text,speaker_id,split\n";
    for (const auto& r : manifest.rows) {
        out << r.audio_path << ',' << r.accent << ',' << join_tokens(r.text) << ','
            << r.speaker_id << ',' << r.split << "\n";
    }
    if (!out.good()) throw ConfigError("save_manifest: write failed for " + path);
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DependencyError("load_manifest: cannot open " + path);
    Manifest m;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "audio_path,accent,text,speaker_id,split") {
                throw ConfigError("manifest line " + std::to_string(line_no) +
                                  ": bad header '" + line + "'");
            }
            header_seen = true;
            continue;
        }
        std::vector<std::string> cols;
        std::string field;
        std::istringstream iss(line);
        while (std::getline(iss, field, ',')) cols.push_back(field);
        if (cols.size() != 5) {
            throw ConfigError("manifest line " + std::to_string(line_no) + ": expected 5 columns, got " +
                              std::to_string(cols.size()));
        }
        for (std::size_t c = 0; c < 5; ++c) {
            if (c != 2 && cols[c].empty()) {
                throw ConfigError("manifest line " + std::to_string(line_no) +
                                  ": empty column " + std::to_string(c));
            }
        }
        ManifestRow r;
        r.audio_path = cols[0];
        r.accent = cols[1];
        r.text = parse_tokens(cols[2], line_no);
        r.speaker_id = cols[3];
        r.split = cols[4];
        if (r.split != "train" && r.split != "validation" && r.split != "eval") {
            throw ConfigError("manifest line " + std::to_string(line_no) + ": bad split '" +
                              r.split + "'");
        }
        m.rows.push_back(std::move(r));
    }
    if (!header_seen) throw ConfigError("load_manifest: missing header in " + path);
    return m;
}

void save_audio_f32(const std::vector<double>& waveform, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("save_audio_f32: cannot open " + path);
    std::vector<float> buf(waveform.size());
    for (std::size_t i = 0; i < waveform.size(); ++i) buf[i] = static_cast<float>(waveform[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out.good()) throw ConfigError("save_audio_f32: write failed for " + path);
}

std::vector<double> load_audio_f32(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw DependencyError("load_audio_f32: cannot open " + path);
    const std::streamsize bytes = in.tellg();
    if (bytes % static_cast<std::streamsize>(sizeof(float)) != 0) {
        throw ConfigError("load_audio_f32: truncated file " + path);
    }
    in.seekg(0);
    std::vector<float> buf(static_cast<std::size_t>(bytes) / sizeof(float));
    in.read(reinterpret_cast<char*>(buf.data()), bytes);
    if (!in.good()) throw ConfigError("load_audio_f32: read failed for " + path);
    std::vector<double> wave(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) wave[i] = static_cast<double>(buf[i]);
    return wave;
}

std::string save_corpus(const std::vector<Utterance>& utterances, const std::string& dir,
                        const std::string& meta_comment) {
    fs::create_directories(fs::path(dir) / "audio");
    Manifest m = manifest_from(utterances);
    const std::string manifest_path = (fs::path(dir) / "manifest.csv").string();
    save_manifest(m, manifest_path, meta_comment);
    for (const auto& u : utterances) {
        save_audio_f32(u.waveform, (fs::path(dir) / "audio" / (u.id + ".f32")).string());
    }
    return manifest_path;
}

std::vector<Utterance> load_corpus(const std::string& manifest_path) {
    Manifest m = load_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<Utterance> out;
    out.reserve(m.rows.size());
    for (const auto& r : m.rows) {
        Utterance u;
        const fs::path audio = base / r.audio_path;
        u.id = fs::path(r.audio_path).stem().string();
        u.accent = r.accent;
        u.speaker_id = r.speaker_id;
        u.text = r.text;
        u.split = r.split;
        u.waveform = load_audio_f32(audio.string());
        out.push_back(std::move(u));
    }
    return out;
}

}  // namespace aces::corpus
