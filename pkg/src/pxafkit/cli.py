"""Command-line entry point orchestrating the full pipeline.

Stages communicate through files under --out-dir; every stage records a
stamp (config-section hash + input file hashes + outputs) and is
skipped on rerun when nothing changed. Exit codes: 0 success, 1 domain
error, 2 usage/configuration error; errors are emitted as one JSON line
on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import PxafError
from .certify import (
    CertifyThresholds,
    DecisionStore,
    analyze_segment,
    auto_certify,
    build_augmented_manifest,
    run_review_service,
)
from .classify import (
    BaselineCnn,
    TrainConfig,
    compare_runs,
    evaluate,
    predict_scores,
    roc_auc,
    train_classifier,
    write_comparison,
    write_roc_csv,
)
from .config import (
    PipelineConfig,
    SchemaError,
    config_hash,
    stage_seed,
    to_dict,
    validate_config,
)
from .data import (
    DatasetManifest,
    Label,
    Split,
    ingest_record,
    load_segments,
    make_toy_record,
    read_manifest,
    resolve_entries,
    save_segments,
    segment_record,
    write_manifest,
    write_raw16,
)
from .dsp import PipelineConfig as SignalOptions
from .dsp import preprocess_segment, read_rimg, write_rimg
from .gan import GanConfig, generate, generation_manifest, load_gan, save_gan, train_gan
from .nas import (
    NetworkPlan,
    SearchConfig,
    build_network,
    derive_genotype,
    genotype_from_json,
    genotype_to_json,
    search,
)
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .stats import fidelity_report, write_fidelity_outputs

LABEL_INDEX = {Label.NORMAL: 0, Label.PXAF: 1}

STAGE_SECTIONS = {
    "data": ["data"],
    "preprocess": ["data", "signal"],
    "gan-train": ["data", "gan"],
    "gan-generate": ["gan"],
    "certify-auto": ["gan", "certify"],
    "augment": ["gan", "certify"],
    "nas-search": ["data", "signal", "nas"],
    "train": ["data", "signal", "nas"],
    "eval": ["data", "signal", "nas", "eval"],
    "stats": ["data", "signal", "gan", "certify"],
}

PIPELINE_ORDER = ["data", "preprocess", "gan-train", "gan-generate",
                  "certify-auto", "augment", "nas-search", "train", "eval",
                  "stats"]


def _file_hash(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _signal_options(cfg: PipelineConfig) -> SignalOptions:
    s = cfg.signal
    return SignalOptions(
        wavelet=s.wavelet, wavelet_levels=s.wavelet_levels,
        detail_levels=tuple(s.detail_levels),
        use_approximation=s.use_approximation,
        shannon_window_seconds=s.shannon_window_seconds,
        recurrence_seconds=s.recurrence_seconds,
        recurrence_thresholded=s.thresholded, recurrence_epsilon=s.epsilon)


def _thresholds(cfg: PipelineConfig) -> CertifyThresholds:
    t = cfg.certify.thresholds
    return CertifyThresholds(
        min_peaks=t.min_peaks, min_envelope_snr=t.min_envelope_snr, tau2=t.tau2,
        tau3=t.tau3, min_rr_ms=t.min_rr_ms, tau4=t.tau4, tau5=t.tau5,
        cv_floor=t.cv_floor, min_rr_per_half=t.min_rr_per_half)


class StageRunner:
    def __init__(self, cfg: PipelineConfig, out_dir: Path, force: bool = False):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.force = force
        self.out.mkdir(parents=True, exist_ok=True)

    # ----------------------------------------------------------- stamping

    def _stamp_path(self, stage: str) -> Path:
        return self.out / "stamps" / f"{stage}.json"

    def _is_done(self, stage: str, inputs: list[Path]) -> bool:
        if self.force:
            return False
        stamp = self._stamp_path(stage)
        if not stamp.exists():
            return False
        doc = json.loads(stamp.read_text())
        if doc.get("config_hash") != config_hash(self.cfg, STAGE_SECTIONS[stage]):
            return False
        recorded = doc.get("inputs", {})
        current = {str(p): _file_hash(p) for p in inputs if Path(p).exists()}
        if set(recorded) != set(current) or any(recorded[k] != current[k]
                                                for k in recorded):
            return False
        return all(Path(p).exists() for p in doc.get("outputs", []))

    def _write_stamp(self, stage: str, inputs: list[Path], outputs: list[Path]):
        stamp = self._stamp_path(stage)
        stamp.parent.mkdir(parents=True, exist_ok=True)
        stamp.write_text(json.dumps({
            "stage": stage,
            "config_hash": config_hash(self.cfg, STAGE_SECTIONS[stage]),
            "inputs": {str(p): _file_hash(p) for p in inputs if Path(p).exists()},
            "outputs": [str(p) for p in outputs],
        }, indent=1, sort_keys=True))

    def run_stage(self, stage: str) -> bool:
        """Returns True if the stage executed, False if skipped."""
        inputs = self._stage_inputs(stage)
        if self._is_done(stage, inputs):
            print(f"[{stage}] up to date, skipping")
            return False
        print(f"[{stage}] running")
        outputs = getattr(self, "stage_" + stage.replace("-", "_"))()
        self._write_stamp(stage, inputs, outputs)
        return True

    def _stage_inputs(self, stage: str) -> list[Path]:
        d = self.out
        table = {
            "data": [],
            "preprocess": [d / "data/segments.npz"],
            "gan-train": [d / "data/segments.npz", d / "data/manifest-train.json"],
            "gan-generate": [d / "gan/gan.ckpt"],
            "certify-auto": [d / "gan/synthetic.npz"],
            "augment": [d / "gan/synthetic.npz", d / "certify/decisions.jsonl",
                        d / "data/manifest-train.json"],
            "nas-search": [d / "images/real/index.json",
                           d / "data/manifest-train.json",
                           d / "data/manifest-validation.json"],
            "train": [d / "nas/genotype.json", d / "images/real/index.json",
                      d / "data/manifest-train-cgan.json"],
            "eval": [d / "model/classifier.ckpt", d / "data/manifest-test.json"],
            "stats": [d / "gan/synthetic.npz", d / "certify/decisions.jsonl"],
        }
        return table[stage]

    # ------------------------------------------------------------- stages

    def stage_data(self) -> list[Path]:
        cfg = self.cfg
        data_dir = self.out / "data"
        rec_dir = data_dir / "records"
        rec_dir.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng(stage_seed(cfg.seed, "data"))
        records = []
        if cfg.data.source == "toy":
            toy = cfg.data.toy
            counts = {
                Split.TRAIN: toy.train_per_class,
                Split.VALIDATION: toy.val_per_class,
                Split.TEST: toy.test_per_class,
            }
            per_record = 8  # 4 s segments per toy record
            assignments = []
            for split, per_class in counts.items():
                for kind in ("normal", "pxaf"):
                    want = per_class
                    if split is Split.TRAIN and kind == "pxaf" \
                            and toy.train_pxaf_count > 0:
                        want = toy.train_pxaf_count
                    n_records = int(np.ceil(want / per_record))
                    assignments.append((split, kind, n_records, want))
            segments_by_split = {s: [] for s in counts}
            for split, kind, n_records, want in assignments:
                got = []
                for r in range(n_records):
                    rid = f"{split.value.lower()}-{kind}-{r:03d}"
                    rec, _ = make_toy_record(
                        kind, duration=4.0 * per_record + 2.0, fs=cfg.data.fs,
                        rng=rng, record_id=rid, noise_std=toy.noise_std)
                    write_raw16(rec, rec_dir / f"{rid}.raw16")
                    records.append(rec)
                    got.extend(segment_record(rec, channel=cfg.data.channel,
                                              seg_seconds=cfg.data.seg_seconds))
                segments_by_split[split].extend(got[:want])
        else:
            paths = sorted(Path(cfg.data.records_dir).glob("*"))
            loadable = [p for p in paths
                        if p.suffix in (".csv", ".raw16") and p.is_file()]
            if not loadable:
                raise PxafError(f"no .csv or .raw16 records in {cfg.data.records_dir}")
            for p in loadable:
                fmt = "csv" if p.suffix == ".csv" else "raw16"
                rec = ingest_record(p, fmt, fs=cfg.data.fs)
                write_raw16(rec, rec_dir / f"{rec.id}.raw16")
                records.append(rec)
            order = rng.permutation(len(records))
            n = len(records)
            f_train, f_val, _ = cfg.data.split_fractions
            cut1 = max(1, int(round(f_train * n)))
            cut2 = min(n - 1, cut1 + max(1, int(round(f_val * n))))
            segments_by_split = {Split.TRAIN: [], Split.VALIDATION: [],
                                 Split.TEST: []}
            for rank, idx in enumerate(order):
                split = (Split.TRAIN if rank < cut1
                         else Split.VALIDATION if rank < cut2 else Split.TEST)
                segments_by_split[split].extend(
                    segment_record(records[idx], channel=cfg.data.channel,
                                   seg_seconds=cfg.data.seg_seconds))

        all_segments = [s for split in segments_by_split.values() for s in split]
        store_path = save_segments(all_segments, data_dir / "segments.npz")
        outputs = [store_path, Path(str(store_path)[:-4] + ".meta.json")]
        for split, segs in segments_by_split.items():
            manifest = DatasetManifest.from_segments(
                f"{split.value.lower()}", split, segs)
            outputs.append(write_manifest(
                manifest, data_dir / f"manifest-{split.value.lower()}.json"))
        return outputs

    def _load_manifest(self, name: str) -> DatasetManifest:
        return read_manifest(self.out / "data" / f"manifest-{name}.json")

    def _segment_store(self):
        return load_segments(self.out / "data/segments.npz")

    def stage_preprocess(self) -> list[Path]:
        store = self._segment_store()
        opts = _signal_options(self.cfg)
        img_dir = self.out / "images/real"
        img_dir.mkdir(parents=True, exist_ok=True)
        chash = config_hash(self.cfg, ["signal"])
        index = {}
        outputs = []
        for k, (sid, seg) in enumerate(sorted(store.items())):
            img = preprocess_segment(seg.samples, seg.fs, opts, segment_id=sid)
            path = img_dir / f"{k:06d}.rimg"
            write_rimg(path, img, config_hash=chash)
            index[sid] = path.name
            outputs.append(path)
        index_path = img_dir / "index.json"
        index_path.write_text(json.dumps(index, sort_keys=True))
        outputs.append(index_path)
        return outputs

    def stage_gan_train(self) -> list[Path]:
        cfg = self.cfg
        manifest = self._load_manifest("train")
        store = self._segment_store()
        segments = [s for s in resolve_entries(manifest, store)
                    if s.label is Label.PXAF]
        g = cfg.gan
        gan_cfg = GanConfig(
            seg_len=g.seg_len, n_leads=g.n_leads, depth=g.depth,
            base_channels=g.base_channels, epochs=g.epochs, lr=g.lr,
            batch_size=g.batch_size, phase_shuffle_n=g.phase_shuffle_n,
            kernel_size=g.kernel_size, dtype=g.dtype,
            seed=stage_seed(cfg.seed, "gan-train"))
        gan_dir = self.out / "gan"
        model, log = train_gan(segments, gan_cfg, out_dir=gan_dir)
        save_gan(model, gan_dir / "gan.ckpt")
        log.write_csv(gan_dir / "gan-loss.csv")
        return [gan_dir / "gan.ckpt", gan_dir / "gan-loss.csv"]

    def _gan_config(self) -> GanConfig:
        g = self.cfg.gan
        return GanConfig(seg_len=g.seg_len, n_leads=g.n_leads, depth=g.depth,
                         base_channels=g.base_channels, epochs=g.epochs, lr=g.lr,
                         batch_size=g.batch_size, phase_shuffle_n=g.phase_shuffle_n,
                         kernel_size=g.kernel_size, dtype=g.dtype,
                         seed=stage_seed(self.cfg.seed, "gan-train"))

    def stage_gan_generate(self) -> list[Path]:
        cfg = self.cfg
        gan_dir = self.out / "gan"
        model = load_gan(self._gan_config(), gan_dir / "gan.ckpt")
        seed = stage_seed(cfg.seed, "gan-generate")
        run_id = f"g{seed:08d}"
        segments = generate(model, cfg.gan.generate_count, seed=seed, run_id=run_id)
        store_path = save_segments(segments, gan_dir / "synthetic.npz")
        manifest = generation_manifest(run_id, seed, len(segments),
                                       gan_dir / "gan.ckpt")
        gen_path = gan_dir / "generation.json"
        gen_path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
        return [store_path, Path(str(store_path)[:-4] + ".meta.json"), gen_path]

    def stage_certify_auto(self) -> list[Path]:
        store = load_segments(self.out / "gan/synthetic.npz")
        decisions_path = self.out / "certify/decisions.jsonl"
        decisions_path.parent.mkdir(parents=True, exist_ok=True)
        if decisions_path.exists():
            decisions_path.unlink()
        dstore = DecisionStore(decisions_path)
        thresholds = _thresholds(self.cfg)
        certified = 0
        for sid in sorted(store):
            decision = auto_certify(store[sid], thresholds)
            dstore.append(decision)
            certified += decision.verdict.value == "Certified"
        print(f"[certify-auto] certified {certified}/{len(store)}")
        return [decisions_path]

    def stage_augment(self) -> list[Path]:
        base = self._load_manifest("train")
        dstore = DecisionStore(self.out / "certify/decisions.jsonl")
        synth = list(load_segments(self.out / "gan/synthetic.npz").values())
        outputs = []
        for variant, include_all in (("cgan", False), ("gan", True)):
            manifest = build_augmented_manifest(base, dstore, synth,
                                                include_uncertified=include_all,
                                                name=f"train-{variant}")
            outputs.append(write_manifest(
                manifest, self.out / f"data/manifest-train-{variant}.json"))
        # recurrence images for synthetic segments (certified or not, so both
        # augmented variants can resolve)
        opts = _signal_options(self.cfg)
        chash = config_hash(self.cfg, ["signal"])
        img_dir = self.out / "images/synth"
        img_dir.mkdir(parents=True, exist_ok=True)
        index = {}
        for k, (sid, seg) in enumerate(sorted(
                load_segments(self.out / "gan/synthetic.npz").items())):
            try:
                img = preprocess_segment(seg.samples, seg.fs, opts, segment_id=sid)
            except PxafError:
                continue  # degenerate output; certification already rejected it
            path = img_dir / f"{k:06d}.rimg"
            write_rimg(path, img, config_hash=chash)
            index[sid] = path.name
        index_path = img_dir / "index.json"
        index_path.write_text(json.dumps(index, sort_keys=True))
        outputs.append(index_path)
        return outputs

    # ------------------------------------------------------ image loading

    def _load_images(self, manifest: DatasetManifest, dtype=np.float32):
        indexes = {}
        for scope in ("real", "synth"):
            index_path = self.out / "images" / scope / "index.json"
            if index_path.exists():
                indexes[scope] = json.loads(index_path.read_text())
        xs, ys = [], []
        for entry in manifest.entries:
            for scope, index in indexes.items():
                if entry.segment_id in index:
                    img = read_rimg(self.out / "images" / scope /
                                    index[entry.segment_id])
                    xs.append(img.matrix.astype(dtype))
                    ys.append(LABEL_INDEX[entry.label])
                    break
            else:
                raise PxafError(f"no recurrence image for {entry.segment_id}")
        x = np.stack(xs)[:, None, :, :]
        return x, np.asarray(ys, dtype=np.int64)

    def stage_nas_search(self) -> list[Path]:
        cfg = self.cfg
        ns = cfg.nas.search
        x_train, y_train = self._load_images(self._load_manifest("train"))
        x_val, y_val = self._load_images(self._load_manifest("validation"))
        search_cfg = SearchConfig(
            epochs=ns.epochs, batch_size=ns.batch_size, w_lr=ns.lr,
            w_momentum=ns.momentum, w_weight_decay=ns.weight_decay,
            alpha_lr=ns.alpha_lr, alpha_weight_decay=ns.alpha_weight_decay,
            init_channels=ns.init_channels, n_normal=ns.n_normal,
            n_reduction=ns.n_reduction, normal_per_block=ns.normal_per_block,
            input_size=x_train.shape[-1], dtype=ns.dtype,
            seed=stage_seed(cfg.seed, "nas-search"))
        alpha, _, log = search((x_train, y_train), (x_val, y_val), search_cfg)
        nas_dir = self.out / "nas"
        nas_dir.mkdir(parents=True, exist_ok=True)
        genotypes = derive_genotype(alpha)
        (nas_dir / "genotype.json").write_text(genotype_to_json(genotypes))
        log.write_csv(nas_dir / "search-log.csv")
        log.write_alpha_snapshots(nas_dir / "alpha")
        return [nas_dir / "genotype.json", nas_dir / "search-log.csv"]

    def _finetune_manifest(self) -> DatasetManifest:
        name = {"original": "train", "cgan": "train-cgan",
                "gan": "train-gan"}[self.cfg.nas.finetune.dataset]
        return self._load_manifest(name)

    def stage_train(self) -> list[Path]:
        cfg = self.cfg
        ft = cfg.nas.finetune
        genotypes = genotype_from_json((self.out / "nas/genotype.json").read_text())
        x, y = self._load_images(self._finetune_manifest())
        plan = NetworkPlan(n_normal=cfg.nas.search.n_normal,
                           n_reduction=cfg.nas.search.n_reduction,
                           normal_per_block=cfg.nas.search.normal_per_block,
                           init_channels=ft.init_channels,
                           input_size=x.shape[-1])
        seed = stage_seed(cfg.seed, "train")
        model = build_network(genotypes, plan, seed=seed, dtype=np.float32)
        train_cfg = TrainConfig(epochs=ft.epochs, batch_size=ft.batch_size,
                                lr=ft.lr, momentum=ft.momentum,
                                weight_decay=ft.weight_decay, seed=seed)
        history = train_classifier(model, (x, y), train_cfg)
        model_dir = self.out / "model"
        save_checkpoint(model.state_dict(), model_dir / "classifier.ckpt")
        (model_dir / "history.json").write_text(json.dumps(history, indent=1))
        outputs = [model_dir / "classifier.ckpt", model_dir / "history.json"]
        if ft.include_baseline:
            baseline = BaselineCnn(seed=seed)
            bl_history = train_classifier(baseline, (x, y), train_cfg)
            save_checkpoint(baseline.state_dict(), model_dir / "baseline.ckpt")
            (model_dir / "baseline-history.json").write_text(
                json.dumps(bl_history, indent=1))
            outputs += [model_dir / "baseline.ckpt",
                        model_dir / "baseline-history.json"]
        return outputs

    def _rebuild_model(self, checkpoint: Path):
        cfg = self.cfg
        genotypes = genotype_from_json((self.out / "nas/genotype.json").read_text())
        plan = NetworkPlan(n_normal=cfg.nas.search.n_normal,
                           n_reduction=cfg.nas.search.n_reduction,
                           normal_per_block=cfg.nas.search.normal_per_block,
                           init_channels=cfg.nas.finetune.init_channels)
        model = build_network(genotypes, plan,
                              seed=stage_seed(cfg.seed, "train"), dtype=np.float32)
        model.load_state_dict(load_checkpoint(checkpoint))
        return model

    def stage_eval(self) -> list[Path]:
        cfg = self.cfg
        x, y = self._load_images(self._load_manifest("test"))
        manifest_hash = _file_hash(self.out / "data/manifest-test.json")
        eval_dir = self.out / "eval"
        eval_dir.mkdir(parents=True, exist_ok=True)
        runs = []
        outputs = []
        candidates = [("searched", self.out / "model/classifier.ckpt")]
        if (self.out / "model/baseline.ckpt").exists():
            candidates.append(("baseline-cnn", self.out / "model/baseline.ckpt"))
        for name, ckpt in candidates:
            if name == "searched":
                model = self._rebuild_model(ckpt)
            else:
                model = BaselineCnn(seed=stage_seed(cfg.seed, "train"))
                model.load_state_dict(load_checkpoint(ckpt))
            result = evaluate(model, (x, y), threshold=cfg.eval.threshold)
            scores = predict_scores(model, x)
            curve = roc_auc(scores, y)
            result["auc"] = curve.auc
            result["name"] = name
            result["test_manifest_hash"] = manifest_hash
            runs.append(result)
            path = eval_dir / f"metrics-{name}.json"
            path.write_text(json.dumps(result, indent=1, sort_keys=True))
            outputs.append(path)
            outputs.append(write_roc_csv(curve, eval_dir / f"roc-{name}.csv"))
        if len(runs) >= 2:
            rows = compare_runs(runs)
            outputs.append(write_comparison(rows, eval_dir / "comparison.csv"))
        summary = {r["name"]: {k: r[k] for k in
                               ("accuracy", "sensitivity", "specificity", "auc")}
                   for r in runs}
        summary_path = eval_dir / "metrics.json"
        summary_path.write_text(json.dumps(summary, indent=1, sort_keys=True))
        outputs.append(summary_path)
        return outputs

    def stage_stats(self) -> list[Path]:
        cfg = self.cfg
        manifest = self._load_manifest("train")
        store = self._segment_store()
        real_pxaf = [s for s in resolve_entries(manifest, store)
                     if s.label is Label.PXAF]
        synth_store = load_segments(self.out / "gan/synthetic.npz")
        dstore = DecisionStore(self.out / "certify/decisions.jsonl")
        certified_ids = {sid for sid, d in dstore.effective().items()
                         if d.verdict.value == "Certified"}
        stats_dir = self.out / "stats"
        stats_dir.mkdir(parents=True, exist_ok=True)
        outputs = []
        populations = {
            "gan": list(synth_store.values()),
            "cgan": [s for sid, s in synth_store.items() if sid in certified_ids],
        }
        opts = _signal_options(cfg)
        report_all = {}
        for name, synth in populations.items():
            if not synth:
                report_all[name] = {"error": "population empty"}
                continue
            try:
                report = fidelity_report(real_pxaf, synth, fs=cfg.data.fs,
                                         cfg=opts,
                                         seed=stage_seed(cfg.seed, "stats"))
                write_fidelity_outputs(report, stats_dir / name)
                report_all[name] = report
            except PxafError as exc:
                report_all[name] = {"error": str(exc)}
        summary = stats_dir / "fidelity.json"
        summary.write_text(json.dumps(report_all, indent=1, sort_keys=True))
        outputs.append(summary)
        return outputs

    def stage_certify_serve(self, host=None, port=None, demo=0, block=True):
        synth_path = self.out / "gan/synthetic.npz"
        if demo:
            from .data import toy_segments
            from .data.records import CertStatus, Provenance, Segment
            rng_seed = stage_seed(self.cfg.seed, "demo")
            segs = toy_segments(demo, "pxaf", seed=rng_seed)
            segments = {}
            for i, s in enumerate(segs):
                segments[f"demo-{i:03d}"] = Segment(
                    id=f"demo-{i:03d}", source="synthetic:demo",
                    samples=s.samples, fs=s.fs, label=s.label,
                    provenance=Provenance.SYNTHETIC,
                    cert_status=CertStatus.PENDING)
        else:
            segments = load_segments(synth_path)
        store = DecisionStore(self.out / "certify/decisions.jsonl")
        static_dir = None
        for candidate in (Path(__file__).resolve().parents[2] / "frontend/dist",
                          self.out / "ui"):
            if candidate.exists():
                static_dir = candidate
                break
        return run_review_service(
            store, segments, host=host or self.cfg.certify.host,
            port=self.cfg.certify.port if port is None else port,
            thresholds=_thresholds(self.cfg), static_dir=static_dir, block=block)


def _emit_error(kind: str, message: str):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pxafkit",
        description="PxAF detection pipeline: synthetic data, certification, "
                    "signal processing, architecture search, evaluation.")
    parser.add_argument("--config", type=str, default=None,
                        help="YAML configuration file (defaults apply if omitted)")
    parser.add_argument("--out-dir", type=str, default="runs/default")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--force", action="store_true",
                        help="re-run stages even when stamps are current")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="config override, e.g. --set gan.epochs=10")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ["ingest", "segment", "preprocess", "gan-train", "gan-generate",
                 "certify-auto", "augment", "nas-search", "train", "eval",
                 "stats", "pipeline", "make-toy", "validate-config"]:
        sub.add_parser(name)
    serve = sub.add_parser("certify-serve")
    serve.add_argument("--host", default=None)
    serve.add_argument("--port", type=int, default=None)
    serve.add_argument("--demo", type=int, default=0,
                       help="serve N generated demo candidates instead of "
                            "the pipeline's synthetic store")

    args = parser.parse_args(argv)
    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise SchemaError(f"override {item!r} must look like key=value")
            key, value = item.split("=", 1)
            overrides[key.replace("/", ".")] = value
        cfg = validate_config(args.config, overrides)
        if args.seed is not None:
            cfg.seed = args.seed
    except SchemaError as exc:
        _emit_error("SchemaError", str(exc))
        return 2
    except Exception as exc:  # unreadable YAML and similar
        _emit_error(type(exc).__name__, str(exc))
        return 2

    runner = StageRunner(cfg, Path(args.out_dir), force=args.force)
    try:
        if args.command == "validate-config":
            print(json.dumps(to_dict(cfg), indent=1, sort_keys=True))
        elif args.command == "pipeline":
            for stage in PIPELINE_ORDER:
                runner.run_stage(stage)
        elif args.command in ("make-toy", "ingest", "segment"):
            # all three materialize records + segments + split manifests
            runner.run_stage("data")
        elif args.command == "certify-serve":
            runner.stage_certify_serve(host=args.host, port=args.port,
                                       demo=args.demo)
        else:
            runner.run_stage(args.command)
        return 0
    except PxafError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
