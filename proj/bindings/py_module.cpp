#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ossem/checkpoint.hpp"
#include "ossem/corpus.hpp"
#include "ossem/eval.hpp"
#include "ossem/features.hpp"
#include "ossem/metrics.hpp"
#include "ossem/speaker.hpp"
#include "ossem/stream.hpp"
#include "ossem/train.hpp"
#include "ossem/wav.hpp"

namespace py = pybind11;
using namespace ossem;

namespace {

std::vector<double> to_vec(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-d array");
  return std::vector<double>(a.data(), a.data() + a.shape(0));
}

py::array_t<double> to_arr1(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> to_arr2(const std::vector<double>& v, int rows, int cols) {
  py::array_t<double> out({rows, cols});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

StftConfig make_cfg(int sample_rate, int frame_len, int hop, const std::string& window) {
  StftConfig cfg;
  cfg.sample_rate = sample_rate;
  cfg.frame_len = frame_len;
  cfg.hop = hop;
  cfg.window = window_from_string(window);
  validate_stft_config(cfg);
  return cfg;
}

SpeakerEmbedding find_embedding(const std::string& csv, const std::string& speaker) {
  auto embs = load_embeddings(csv);
  auto it = embs.find(speaker);
  if (it == embs.end()) throw std::runtime_error("no embedding for speaker " + speaker);
  return it->second;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "one-shot speaker-adaptive speech enhancement (native core)";

  m.def(
      "stft",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> wave, int sample_rate,
         int frame_len, int hop, const std::string& window) {
        auto spec = stft(to_vec(wave), make_cfg(sample_rate, frame_len, hop, window));
        return py::make_tuple(to_arr2(spec.mag, spec.frames, spec.bins),
                              to_arr2(spec.phase, spec.frames, spec.bins));
      },
      py::arg("wave"), py::arg("sample_rate") = 16000, py::arg("frame_len") = 512,
      py::arg("hop") = 256, py::arg("window") = "hann",
      "Magnitude/phase analysis; returns (mag[T,F], phase[T,F]).");

  m.def(
      "istft",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> mag,
         py::array_t<double, py::array::c_style | py::array::forcecast> phase, int sample_rate,
         int frame_len, int hop, const std::string& window, size_t out_len) {
        if (mag.ndim() != 2 || phase.ndim() != 2) throw std::invalid_argument("expected 2-d arrays");
        Spectrogram spec;
        spec.cfg = make_cfg(sample_rate, frame_len, hop, window);
        spec.frames = static_cast<int>(mag.shape(0));
        spec.bins = static_cast<int>(mag.shape(1));
        if (phase.shape(0) != mag.shape(0) || phase.shape(1) != mag.shape(1))
          throw std::invalid_argument("mag/phase shape mismatch");
        spec.mag.assign(mag.data(), mag.data() + mag.size());
        spec.phase.assign(phase.data(), phase.data() + phase.size());
        return to_arr1(istft(spec, out_len));
      },
      py::arg("mag"), py::arg("phase"), py::arg("sample_rate") = 16000, py::arg("frame_len") = 512,
      py::arg("hop") = 256, py::arg("window") = "hann", py::arg("out_len") = 0,
      "Weighted overlap-add resynthesis.");

  m.def(
      "si_sdr",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> est,
         py::array_t<double, py::array::c_style | py::array::forcecast> ref) {
        return si_sdr(to_vec(est), to_vec(ref));
      },
      py::arg("est"), py::arg("ref"), "Scale-invariant SDR in dB.");

  m.def(
      "seg_snr",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> est,
         py::array_t<double, py::array::c_style | py::array::forcecast> ref, int frame_len) {
        return seg_snr(to_vec(est), to_vec(ref), frame_len);
      },
      py::arg("est"), py::arg("ref"), py::arg("frame_len") = 256, "Segmental SNR in dB.");

  m.def(
      "spectral_l1",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> est,
         py::array_t<double, py::array::c_style | py::array::forcecast> ref, int sample_rate,
         int frame_len, int hop, const std::string& window) {
        return spectral_l1(to_vec(est), to_vec(ref),
                           make_cfg(sample_rate, frame_len, hop, window));
      },
      py::arg("est"), py::arg("ref"), py::arg("sample_rate") = 16000, py::arg("frame_len") = 512,
      py::arg("hop") = 256, py::arg("window") = "hann",
      "Mean absolute spectral magnitude difference between two waveforms.");

  m.def(
      "builtin_embed",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> wave,
         const std::string& speaker_id) {
        auto e = builtin_embed(to_vec(wave), speaker_id);
        return to_arr1(std::vector<double>(e.vec.begin(), e.vec.end()));
      },
      py::arg("wave"), py::arg("speaker_id") = "",
      "192-dim spectral speaker embedding (unit norm, 16 kHz input).");

  m.def(
      "rescale_ratio",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> clean,
         py::array_t<double, py::array::c_style | py::array::forcecast> noisy) {
        std::vector<double> c = to_vec(clean), n = to_vec(noisy);
        return rescale_ratio_span<double>(c, n);
      },
      py::arg("clean_mag"), py::arg("noisy_mag"),
      "Energy ratio sum(clean^2)/sum(noisy^2) over flattened magnitudes.");

  m.def("ilr_schedule", &ilr_schedule, py::arg("epoch"), py::arg("epochs"), py::arg("ilr_peak"),
        "Inner learning-rate warmup schedule.");

  m.def(
      "gen_corpus",
      [](const std::string& out_dir, uint64_t seed, int n_train, int n_test, int utts,
         double duration_s, int sample_rate) {
        CorpusConfig cfg;
        cfg.n_train_speakers = n_train;
        cfg.n_test_speakers = n_test;
        cfg.utts_per_speaker = utts;
        cfg.duration_s = duration_s;
        cfg.sample_rate = sample_rate;
        auto m2 = gen_corpus(cfg, out_dir, seed);
        return py::make_tuple(m2.speakers.size(), m2.utts.size());
      },
      py::arg("out_dir"), py::arg("seed") = 1234, py::arg("n_train_speakers") = 8,
      py::arg("n_test_speakers") = 2, py::arg("utts_per_speaker") = 22,
      py::arg("duration_s") = 1.0, py::arg("sample_rate") = 16000,
      "Synthesize the seeded corpus; returns (n_speakers, n_utterances).");

  m.def(
      "enhance_file",
      [](const std::string& ckpt_path, const std::string& in_wav, const std::string& out_wav,
         const std::string& embeddings_csv, const std::string& speaker, int frame_len, int hop) {
        CheckpointData ckpt = load_checkpoint(ckpt_path);
        SpeakerEmbedding emb;
        if (ckpt.speaker)
          emb = *ckpt.speaker;
        else if (!embeddings_csv.empty() && !speaker.empty())
          emb = find_embedding(embeddings_csv, speaker);
        else
          throw std::runtime_error("checkpoint carries no speaker; pass embeddings_csv and speaker");
        WavData in = read_wav(in_wav);
        StftConfig cfg = make_cfg(in.sample_rate, frame_len, hop, "hann");
        if (ckpt.cfg.freq_bins != cfg.bins())
          throw std::runtime_error("frame_len does not match the checkpoint's bin count");
        auto est = enhance_wave(ckpt.params, embedding_tensor<float>(emb), in.samples, cfg);
        const size_t n = est.size();
        write_wav(out_wav, WavData{in.sample_rate, std::move(est)});
        return n;
      },
      py::arg("checkpoint"), py::arg("in_wav"), py::arg("out_wav"),
      py::arg("embeddings_csv") = "", py::arg("speaker") = "", py::arg("frame_len") = 512,
      py::arg("hop") = 256, "Enhance one WAV through a saved checkpoint.");

  m.def(
      "speaker_mask",
      [](const std::string& ckpt_path, const std::string& embeddings_csv,
         const std::string& speaker) {
        CheckpointData ckpt = load_checkpoint(ckpt_path);
        SpeakerEmbedding emb = find_embedding(embeddings_csv, speaker);
        auto mask = mask_for(ckpt.params, emb);
        return to_arr1(std::vector<double>(mask.begin(), mask.end()));
      },
      py::arg("checkpoint"), py::arg("embeddings_csv"), py::arg("speaker"),
      "Evaluate the mask network for one speaker.");
}
