"""Command-line interface tying corpus synthesis, training, enhancement
and evaluation together.

Every command validates its configuration up front, writes its artifacts
deterministically under the configured paths and leaves a reproducibility
stamp (config hash, seeds, versions) next to them.
"""

import argparse
import json
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .classifiers import load_classifier, save_classifier, train_classifier
from .config import ConfigError, load_config
from .container import read_container
from .dataset import (
    collect_frames,
    collect_labels,
    load_index,
    read_labels,
    read_manifest,
    synthesize_dataset,
)
from .evaluate import (
    MixtureSystem,
    SupervisedSystem,
    VaeSystem,
    enhance_mcem,
    estimate_labels,
    run_evaluation,
)
from .mcem import McemConfig
from .nn import TrainConfig, parameter_count
from .signals import stft
from .supervised import load_mask_net, save_mask_net, train_supervised
from .vae import build_model, load_vae, save_vae, train_vae
from .wavio import read_wav, write_wav

__all__ = ["main"]


def _stamp(path, command, cfg, seeds):
    payload = {
        "command": command,
        "config_hash": cfg.hash(),
        "seeds": seeds,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "gvae": __version__,
        },
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _require(cfg, section, key, hint):
    value = cfg.get(section, key)
    if not value:
        raise ConfigError("%s.%s must be set (%s)" % (section, key, hint))
    return value


def _train_cfg(cfg):
    return TrainConfig(
        batch_size=cfg.get("train", "batch_size"),
        lr=cfg.get("train", "lr"),
        patience=cfg.get("train", "patience"),
        max_epochs=cfg.get("train", "max_epochs"),
        rng_seed=cfg.get("train", "seed"),
    )


def _mcem_cfg(cfg):
    return McemConfig(
        n_iters=cfg.get("mcem", "n_iters"),
        n_samples=cfg.get("mcem", "n_samples"),
        burn_in=cfg.get("mcem", "burn_in"),
        proposal_std=cfg.get("mcem", "proposal_std"),
        rng_seed=cfg.get("mcem", "seed"),
    )


def _split(entries, name):
    chosen = [e for e in entries if e.split == name]
    if not chosen:
        raise ValueError("corpus has no %r entries" % name)
    return chosen


def _ckpt(cfg, name):
    base = _require(cfg, "paths", "checkpoint_dir", "where checkpoints live")
    os.makedirs(base, exist_ok=True)
    return os.path.join(base, name)


def cmd_synth_data(cfg, args):
    manifest = _require(cfg, "paths", "manifest", "dataset manifest to synthesize")
    out_dir = _require(cfg, "paths", "corpus_dir", "where to materialize the corpus")
    records = read_manifest(manifest)
    entries = synthesize_dataset(
        records, out_dir, n_fft=cfg.get("stft", "n_fft"), hop=cfg.get("stft", "hop")
    )
    _stamp(os.path.join(out_dir, "stamp.json"), "synth-data", cfg,
           {"records": [r.rng_seed for r in records]})
    print("synthesized %d utterances into %s" % (len(entries), out_dir))
    return 0


def _vae_ckpt_name(variant):
    return "vae_%s.gv" % variant.lower()


def cmd_train_vae(cfg, args):
    corpus = _require(cfg, "paths", "corpus_dir", "synthesized corpus")
    variant = cfg.get("model", "variant")
    n_fft, hop = cfg.get("stft", "n_fft"), cfg.get("stft", "hop")
    entries = load_index(corpus)
    train_entries = _split(entries, "train")
    valid_entries = _split(entries, "valid")

    x_tr = collect_frames(train_entries, n_fft, hop, want="clean_power")
    x_va = collect_frames(valid_entries, n_fft, hop, want="clean_power")
    y_tr = y_va = None
    if variant != "M1":
        kind = "VAD" if variant == "M2-VAD" else "IBM"
        y_tr = collect_labels(train_entries, kind)
        y_va = collect_labels(valid_entries, kind)

    model = build_model(
        variant,
        n_bins=n_fft // 2 + 1,
        latent_dim=cfg.get("model", "latent_dim"),
        hidden=cfg.get("model", "hidden_units"),
        rng_seed=cfg.get("train", "seed"),
    )
    history = train_vae(model, x_tr, x_va, _train_cfg(cfg), train_labels=y_tr,
                        valid_labels=y_va)
    out = args.out or _ckpt(cfg, _vae_ckpt_name(variant))
    save_vae(out, model)
    _stamp(out + ".stamp.json", "train-vae", cfg, {"train": cfg.get("train", "seed")})
    print("trained %s: params=%d best_epoch=%d valid_loss=%.4f -> %s"
          % (variant, parameter_count(model), history["best_epoch"],
             min(history["valid_loss"]), out))
    return 0


def cmd_train_classifier(cfg, args):
    corpus = _require(cfg, "paths", "corpus_dir", "synthesized corpus")
    kind = args.kind.upper()
    n_fft, hop = cfg.get("stft", "n_fft"), cfg.get("stft", "hop")
    entries = load_index(corpus)
    train_entries = _split(entries, "train")
    valid_entries = _split(entries, "valid")

    x_tr = collect_frames(train_entries, n_fft, hop, want="mix_power")
    x_va = collect_frames(valid_entries, n_fft, hop, want="mix_power")
    y_tr = collect_labels(train_entries, kind)
    y_va = collect_labels(valid_entries, kind)

    model, history = train_classifier(
        kind, x_tr, y_tr, x_va, y_va, _train_cfg(cfg),
        hidden=cfg.get("model", "hidden_units"),
    )
    out = args.out or _ckpt(cfg, "classifier_%s.gv" % kind.lower())
    save_classifier(out, model)
    _stamp(out + ".stamp.json", "train-classifier", cfg,
           {"train": cfg.get("train", "seed")})
    print("trained %s classifier: params=%d valid_loss=%.4f -> %s"
          % (kind, parameter_count(model), min(history["valid_loss"]), out))
    return 0


def cmd_train_supervised(cfg, args):
    corpus = _require(cfg, "paths", "corpus_dir", "synthesized corpus")
    n_fft, hop = cfg.get("stft", "n_fft"), cfg.get("stft", "hop")
    entries = load_index(corpus)
    train_entries = _split(entries, "train")
    valid_entries = _split(entries, "valid")

    mix_tr, clean_tr = collect_frames(train_entries, n_fft, hop, want="magnitudes")
    mix_va, clean_va = collect_frames(valid_entries, n_fft, hop, want="magnitudes")
    model, history = train_supervised(
        mix_tr, clean_tr, mix_va, clean_va, _train_cfg(cfg),
        hidden=cfg.get("model", "hidden_units"),
    )
    out = args.out or _ckpt(cfg, "masknet.gv")
    save_mask_net(out, model)
    _stamp(out + ".stamp.json", "train-supervised", cfg,
           {"train": cfg.get("train", "seed")})
    print("trained supervised baseline: params=%d valid_loss=%.4f -> %s"
          % (parameter_count(model), min(history["valid_loss"]), out))
    return 0


def _load_vae_for(cfg, args):
    variant = cfg.get("model", "variant")
    path = args.vae or _ckpt(cfg, _vae_ckpt_name(variant))
    model = load_vae(path)
    if model.variant != variant:
        raise ConfigError("checkpoint %s holds variant %s, config says %s"
                          % (path, model.variant, variant))
    return model


def _classifier_for(cfg, args, variant):
    backend = cfg.get("classifier", "backend")
    if variant == "M1":
        return None, None
    if not backend:
        raise ConfigError("classifier.backend required for guided variant %s" % variant)
    classifier = None
    if backend in ("dnn-vad", "dnn-ibm"):
        path = cfg.get("classifier", "checkpoint") or _ckpt(
            cfg, "classifier_%s.gv" % backend.split("-")[1]
        )
        classifier = load_classifier(path)
    return backend, classifier


def cmd_enhance(cfg, args):
    variant = cfg.get("model", "variant")
    model = _load_vae_for(cfg, args)
    backend, classifier = _classifier_for(cfg, args, variant)
    n_fft, hop = cfg.get("stft", "n_fft"), cfg.get("stft", "hop")
    mcem_cfg = _mcem_cfg(cfg)
    nmf_rank = cfg.get("mcem", "nmf_rank")
    label_kind = {"M2-VAD": "VAD", "M2-IBM": "IBM"}.get(variant)

    if args.input:
        if not args.output:
            raise ConfigError("enhance --input needs --output")
        mixture = read_wav(args.input)
        labels = None
        if variant != "M1":
            if backend == "oracle":
                if not args.labels:
                    raise ConfigError("oracle backend on a single file needs --labels")
                vad, ibm, _ = read_labels(args.labels)
                labels = vad if label_kind == "VAD" else ibm
            else:
                mix_power = stft(mixture, n_fft=n_fft, hop=hop).power()
                labels = estimate_labels(backend, mix_power, classifier=classifier,
                                         kind=label_kind)
        estimate, chain = enhance_mcem(mixture, model, labels, mcem_cfg,
                                       nmf_rank=nmf_rank, n_fft=n_fft, hop=hop)
        write_wav(args.output, estimate)
        with open(args.output + ".trace.tsv", "w") as f:
            for it, q, rate in chain.trace:
                f.write("%d\t%.8e\t%.4f\n" % (it, q, rate))
        _stamp(args.output + ".stamp.json", "enhance", cfg,
               {"mcem": mcem_cfg.rng_seed})
        print("enhanced %s -> %s (%d MCEM iterations)"
              % (args.input, args.output, len(chain.trace)))
        return 0

    corpus = _require(cfg, "paths", "corpus_dir", "synthesized corpus")
    out_dir = _require(cfg, "paths", "output_dir", "where enhanced audio goes")
    os.makedirs(out_dir, exist_ok=True)
    entries = _split(load_index(corpus), args.split)
    system = VaeSystem(model, backend=backend, classifier=classifier,
                       mcem_cfg=mcem_cfg, nmf_rank=nmf_rank, n_fft=n_fft, hop=hop)

    def work(entry):
        estimate = system.enhance(entry)
        out = os.path.join(out_dir, "utt%05d_enhanced.wav" % entry.index)
        return entry.index, out, estimate

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(work, entries))
    else:
        results = [work(e) for e in entries]
    for _, out, estimate in sorted(results, key=lambda r: r[0]):
        write_wav(out, estimate)
    _stamp(os.path.join(out_dir, "stamp.json"), "enhance", cfg,
           {"mcem": mcem_cfg.rng_seed})
    print("enhanced %d utterances into %s" % (len(results), out_dir))
    return 0


def _parse_system(token, cfg, args, cache):
    """mixture | supervised | m1 | m2-vad:BACKEND | m2-ibm:BACKEND"""
    name, _, backend = token.partition(":")
    name = name.lower()
    n_fft, hop = cfg.get("stft", "n_fft"), cfg.get("stft", "hop")
    if name == "mixture":
        return MixtureSystem()
    if name == "supervised":
        return SupervisedSystem(load_mask_net(_ckpt(cfg, "masknet.gv")),
                                n_fft=n_fft, hop=hop)
    variant = {"m1": "M1", "m2-vad": "M2-VAD", "m2-ibm": "M2-IBM"}.get(name)
    if variant is None:
        raise ConfigError("unknown system %r" % token)
    if variant != "M1" and not backend:
        raise ConfigError("system %s needs a classifier backend, e.g. %s:oracle"
                          % (name, name))
    if backend == "dnn":
        backend = "dnn-vad" if variant == "M2-VAD" else "dnn-ibm"
    if backend == "spp":
        backend = "spp-ibm"
    model = cache.get(variant)
    if model is None:
        model = cache[variant] = load_vae(_ckpt(cfg, _vae_ckpt_name(variant)))
    classifier = None
    if backend in ("dnn-vad", "dnn-ibm"):
        classifier = load_classifier(_ckpt(cfg, "classifier_%s.gv" % backend.split("-")[1]))
    return VaeSystem(model, backend=backend or None, classifier=classifier,
                     mcem_cfg=_mcem_cfg(cfg), nmf_rank=cfg.get("mcem", "nmf_rank"),
                     n_fft=n_fft, hop=hop)


def cmd_evaluate(cfg, args):
    corpus = _require(cfg, "paths", "corpus_dir", "synthesized corpus")
    entries = _split(load_index(corpus), args.split)
    cache = {}
    systems = [_parse_system(tok, cfg, args, cache)
               for tok in args.systems.split(",") if tok]
    report = run_evaluation(entries, systems, jobs=args.jobs,
                            metadata={"config_hash": cfg.hash(),
                                      "seed": cfg.get("mcem", "seed")})
    out_dir = cfg.get("paths", "output_dir") or "."
    os.makedirs(out_dir, exist_ok=True)
    tsv_path = os.path.join(out_dir, "report.tsv")
    with open(tsv_path, "w") as f:
        f.write(report.to_tsv())
    with open(os.path.join(out_dir, "report.txt"), "w") as f:
        f.write(report.to_text())
    _stamp(tsv_path + ".stamp.json", "evaluate", cfg,
           {"mcem": cfg.get("mcem", "seed")})
    print(report.to_text(), end="")
    return 0


def cmd_inspect(cfg, args):
    meta, blocks = read_container(args.path)
    kind = meta.get("kind", "net")
    params = sum(b.weights.size + b.bias.size for b in blocks if b.act_id != 254)
    print("kind=%s" % kind)
    for key, value in sorted(meta.items()):
        if key != "kind":
            print("%s=%s" % (key, value))
    print("params=%d" % params)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gvae",
        description="Speech enhancement with VAE priors, an NMF noise model "
                    "and MCEM inference.",
    )
    parser.add_argument("--config", help="config file (else $GVAE_CONFIG, else defaults)")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth-data", help="materialize a dataset manifest")

    p = sub.add_parser("train-vae", help="train the configured VAE variant")
    p.add_argument("--out", help="checkpoint path override")

    p = sub.add_parser("train-classifier", help="train a label classifier")
    p.add_argument("--kind", choices=["vad", "ibm"], required=True)
    p.add_argument("--out", help="checkpoint path override")

    p = sub.add_parser("train-supervised", help="train the mask-DNN baseline")
    p.add_argument("--out", help="checkpoint path override")

    p = sub.add_parser("enhance", help="enhance a file or a corpus split")
    p.add_argument("--input", help="single noisy WAV")
    p.add_argument("--output", help="output WAV for --input mode")
    p.add_argument("--labels", help="label container for the oracle backend")
    p.add_argument("--vae", help="VAE checkpoint override")
    p.add_argument("--split", default="test")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("evaluate", help="score systems on a corpus split")
    p.add_argument("--systems", default="mixture",
                   help="comma list: mixture,supervised,m1,m2-vad:oracle,"
                        "m2-ibm:dnn,m2-ibm:spp,...")
    p.add_argument("--split", default="test")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("inspect", help="print checkpoint header and parameter count")
    p.add_argument("path")
    return parser


COMMANDS = {
    "synth-data": cmd_synth_data,
    "train-vae": cmd_train_vae,
    "train-classifier": cmd_train_classifier,
    "train-supervised": cmd_train_supervised,
    "enhance": cmd_enhance,
    "evaluate": cmd_evaluate,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print("error: config: %s" % exc, file=sys.stderr)
        return 2
    except Exception as exc:  # one-line machine-parsable failure
        print("error: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
