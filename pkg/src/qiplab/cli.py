"""Configuration-driven experiment runner with CSV reports.

Each subcommand runs one seeded experiment and writes a CSV file whose
first line names the columns and whose second line is a comment echoing
the full merged configuration.  Floats are printed with 17 significant
digits so a report round-trips losslessly.  Exit status: 0 on success,
2 on configuration or usage errors, 3 on internal invariant breaches.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .channels import EbChannel, KrausChannel, check_eb_ppt
from .errors import ContractError, NumericsError, QipLabError, ValidationError
from .optimize import (
    OptimizerConfig,
    exact_classical_response_value,
    majority_amplify,
    nexp_decide,
    seesaw_entangled_value,
    subsampling_experiment,
)
from .protocol import (
    CanonicalStrategy,
    ClassicalResponseStrategy,
    EntangledStrategy,
    ProtocolSpec,
    RawUnentangledStrategy,
    acceptance_probability,
    canonicalize_prover,
    chsh_protocol,
)
from .qmath import MeasurementOperator, Povm, PureState, RegisterLayout
from .random_instances import random_eb_channel, random_raw_prover, random_verifier_spec
from .utils import derived_rng

ProverStrategy = (
    EntangledStrategy | RawUnentangledStrategy | CanonicalStrategy | ClassicalResponseStrategy
)


def fmt17(x: float) -> str:
    """Float with 17 significant digits; enough to reconstruct the double."""
    return "%.17g" % float(x)


# ---------------------------------------------------------------------------
# document format: JSON with sorted keys and 17-significant-digit floats


def dumps_document(doc: Any) -> str:
    out: list[str] = []
    _write_json(doc, out)
    return "".join(out)


def _write_json(node: Any, out: list[str]) -> None:
    if isinstance(node, Mapping):
        out.append("{")
        for i, key in enumerate(sorted(node)):
            if not isinstance(key, str):
                raise ContractError(f"document keys must be strings, got {key!r}")
            if i:
                out.append(",")
            out.append(json.dumps(key))
            out.append(":")
            _write_json(node[key], out)
        out.append("}")
    elif isinstance(node, (list, tuple)):
        out.append("[")
        for i, item in enumerate(node):
            if i:
                out.append(",")
            _write_json(item, out)
        out.append("]")
    elif isinstance(node, bool):
        out.append("true" if node else "false")
    elif isinstance(node, (int, np.integer)):
        out.append(str(int(node)))
    elif isinstance(node, (float, np.floating)):
        out.append(fmt17(float(node)))
    elif node is None:
        out.append("null")
    elif isinstance(node, str):
        out.append(json.dumps(node))
    else:
        raise ContractError(f"cannot serialize {type(node).__name__} into a document")


def _encode_array(arr: np.ndarray) -> list[list[float]]:
    """Row-major list of [re, im] pairs."""
    flat = np.asarray(arr, dtype=np.complex128).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def _decode_array(pairs: Sequence[Sequence[float]], shape: tuple[int, ...]) -> np.ndarray:
    count = 1
    for d in shape:
        count *= d
    if len(pairs) != count:
        raise ValidationError(f"expected {count} entries for shape {shape}, got {len(pairs)}")
    flat = np.array([complex(float(re), float(im)) for re, im in pairs], dtype=np.complex128)
    return flat.reshape(shape)


def _encode_layout(layout: RegisterLayout) -> dict[str, Any]:
    return {"names": list(layout.names), "dims": list(layout.dims)}


def _decode_layout(doc: Mapping[str, Any]) -> RegisterLayout:
    return RegisterLayout(tuple(doc["names"]), tuple(int(d) for d in doc["dims"]))


def channel_document(channel: KrausChannel | EbChannel) -> dict[str, Any]:
    base = {
        "in": _encode_layout(channel.in_layout),
        "out": _encode_layout(channel.out_layout),
    }
    if isinstance(channel, KrausChannel):
        return {"form": "kraus", "ops": [_encode_array(k) for k in channel.kraus_ops], **base}
    if isinstance(channel, EbChannel):
        return {
            "form": "eb",
            "povm": [_encode_array(e.entries) for e in channel.povm.elements],
            "preps": [_encode_array(p.amplitudes) for p in channel.preps],
            **base,
        }
    raise ContractError(f"no document form for {type(channel).__name__}")


def channel_from_document(doc: Mapping[str, Any]) -> KrausChannel | EbChannel:
    try:
        form = doc["form"]
        in_layout = _decode_layout(doc["in"])
        out_layout = _decode_layout(doc["out"])
        if form == "kraus":
            shape = (out_layout.total_dim, in_layout.total_dim)
            ops = tuple(_decode_array(p, shape) for p in doc["ops"])
            return KrausChannel(in_layout, out_layout, ops)
        if form == "eb":
            d_in = in_layout.total_dim
            povm = Povm(
                tuple(
                    MeasurementOperator(in_layout, _decode_array(p, (d_in, d_in)))
                    for p in doc["povm"]
                )
            )
            preps = tuple(
                PureState(out_layout, _decode_array(p, (out_layout.total_dim,)))
                for p in doc["preps"]
            )
            return EbChannel(povm, preps)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed channel document: {exc}") from exc
    raise ValidationError(f"unknown channel form {form!r}")


def protocol_document(spec: ProtocolSpec) -> dict[str, Any]:
    return {
        "kind": "protocol",
        "m": _encode_layout(spec.m_layout),
        "v": _encode_layout(spec.v_layout),
        "rounds": spec.rounds,
        "v1": None if spec.v1 is None else channel_document(spec.v1),
        "v2": channel_document(spec.v2),
        "accept": _encode_array(spec.accept.entries),
        "classical_rounds": sorted(spec.classical_rounds),
        "public_coin": spec.public_coin,
        "coin_label": spec.coin_label,
        "saved_label": spec.saved_label,
    }


def protocol_from_document(doc: Mapping[str, Any]) -> ProtocolSpec:
    try:
        if doc.get("kind") != "protocol":
            raise ValidationError(f"expected a protocol document, got kind={doc.get('kind')!r}")
        m_layout = _decode_layout(doc["m"])
        v_layout = _decode_layout(doc["v"])
        joint = m_layout.concat(v_layout)
        d = joint.total_dim
        v1_doc = doc["v1"]
        return ProtocolSpec(
            m_layout=m_layout,
            v_layout=v_layout,
            rounds=int(doc["rounds"]),
            v1=None if v1_doc is None else channel_from_document(v1_doc),
            v2=channel_from_document(doc["v2"]),
            accept=MeasurementOperator(joint, _decode_array(doc["accept"], (d, d))),
            classical_rounds=frozenset(int(r) for r in doc["classical_rounds"]),
            public_coin=bool(doc["public_coin"]),
            coin_label=doc["coin_label"],
            saved_label=doc["saved_label"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed protocol document: {exc}") from exc


def _state_document(state: PureState) -> dict[str, Any]:
    return {"layout": _encode_layout(state.layout), "amplitudes": _encode_array(state.amplitudes)}


def _state_from_document(doc: Mapping[str, Any]) -> PureState:
    layout = _decode_layout(doc["layout"])
    return PureState(layout, _decode_array(doc["amplitudes"], (layout.total_dim,)))


def strategy_document(prover: ProverStrategy) -> dict[str, Any]:
    if isinstance(prover, EntangledStrategy):
        return {
            "kind": "entangled",
            "workspace": _encode_layout(prover.workspace),
            "first": channel_document(prover.first),
            "respond": channel_document(prover.respond),
        }
    if isinstance(prover, RawUnentangledStrategy):
        return {
            "kind": "raw",
            "workspace": _encode_layout(prover.workspace),
            "eb_labels": list(prover.eb_labels),
            "mix1": channel_document(prover.mix1),
            "emit1": channel_document(prover.emit1),
            "mix2": channel_document(prover.mix2),
            "emit2": channel_document(prover.emit2),
        }
    if isinstance(prover, CanonicalStrategy):
        return {
            "kind": "canonical",
            "first_message": _state_document(prover.first_message),
            "respond": channel_document(prover.respond),
        }
    if isinstance(prover, ClassicalResponseStrategy):
        first = prover.first_message
        return {
            "kind": "classical",
            "first_message": None if first is None else _state_document(first),
            "responses": dict(prover.responses),
        }
    raise ContractError(f"no document form for {type(prover).__name__}")


def strategy_from_document(doc: Mapping[str, Any]) -> ProverStrategy:
    try:
        kind = doc["kind"]
        if kind == "entangled":
            return EntangledStrategy(
                workspace=_decode_layout(doc["workspace"]),
                first=channel_from_document(doc["first"]),
                respond=channel_from_document(doc["respond"]),
            )
        if kind == "raw":
            return RawUnentangledStrategy(
                workspace=_decode_layout(doc["workspace"]),
                eb_labels=tuple(doc["eb_labels"]),
                mix1=channel_from_document(doc["mix1"]),
                emit1=channel_from_document(doc["emit1"]),
                mix2=channel_from_document(doc["mix2"]),
                emit2=channel_from_document(doc["emit2"]),
            )
        if kind == "canonical":
            return CanonicalStrategy(
                first_message=_state_from_document(doc["first_message"]),
                respond=channel_from_document(doc["respond"]),
            )
        if kind == "classical":
            first = doc["first_message"]
            return ClassicalResponseStrategy(
                first_message=None if first is None else _state_from_document(first),
                responses={str(y): str(z) for y, z in doc["responses"].items()},
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed strategy document: {exc}") from exc
    raise ValidationError(f"unknown strategy kind {kind!r}")


# ---------------------------------------------------------------------------
# CSV reports


def render_csv(
    columns: Sequence[str],
    rows: Sequence[Sequence[Any]],
    config_doc: Mapping[str, Any],
    footer: Sequence[tuple[str, Any]] | None = None,
) -> bytes:
    lines = [",".join(columns), "# config " + dumps_document(config_doc)]
    for row in rows:
        if len(row) != len(columns):
            raise ContractError(f"row {row!r} does not match columns {columns!r}")
        lines.append(",".join(_cell(v) for v in row))
    if footer:
        lines.append("# " + " ".join(f"{key}={_cell(v)}" for key, v in footer))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        raise ContractError("encode verdicts as strings, not booleans")
    if isinstance(value, (float, np.floating)):
        return fmt17(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        if "," in value or "\n" in value or "#" in value:
            raise ContractError(f"cell {value!r} would corrupt the CSV")
        return value
    raise ContractError(f"cannot render {type(value).__name__} as a CSV cell")


# ---------------------------------------------------------------------------
# experiment configs


@dataclass(frozen=True)
class ExperimentConfig:
    """A command tag plus its fully merged, validated parameters."""

    command: str
    params: Mapping[str, Any]

    def __post_init__(self):
        if self.command not in _PARAM_TABLES:
            raise ValidationError(f"unknown command {self.command!r}")
        table = _PARAM_TABLES[self.command]
        merged: dict[str, Any] = {}
        for name, (convert, default) in table.items():
            value = self.params.get(name, default)
            merged[name] = default if value is None else convert(name, value)
        unknown = set(self.params) - set(table)
        if unknown:
            raise ValidationError(f"unknown parameters for {self.command}: {sorted(unknown)}")
        object.__setattr__(self, "params", merged)

    def document(self) -> dict[str, Any]:
        return {"command": self.command, **self.params}


def _as_int(name: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"parameter {name} must be an integer, got {value!r}")
    return value


def _as_float(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"parameter {name} must be a number, got {value!r}")
    return float(value)


def _as_str(name: str, value: Any) -> str:
    if not isinstance(value, str):
        raise ValidationError(f"parameter {name} must be a string, got {value!r}")
    return value


_PARAM_TABLES: dict[str, dict[str, tuple[Callable[[str, Any], Any], Any]]] = {
    "chsh-gap": {
        "restarts": (_as_int, 16),
        "seed": (_as_int, 0),
        "csv": (_as_str, "chsh-gap.csv"),
    },
    "canonicalize": {
        "trials": (_as_int, 50),
        "seed": (_as_int, 0),
        "spec": (_as_str, None),
        "prover": (_as_str, None),
        "emit": (_as_str, None),
        "csv": (_as_str, "canonicalize.csv"),
    },
    "eb-check": {
        "count": (_as_int, 100),
        "seed": (_as_int, 0),
        "channel": (_as_str, None),
        "csv": (_as_str, "eb-check.csv"),
    },
    "nexp-decide": {
        "c": (_as_float, 0.8),
        "s": (_as_float, 0.6),
        "resolution": (_as_int, 2000),
        "seed": (_as_int, 0),
        "csv": (_as_str, "nexp-decide.csv"),
    },
    "subsample": {
        "family": (_as_str, "chsh"),
        "r": (_as_int, 256),
        "eps": (_as_float, 0.1),
        "trials": (_as_int, 100),
        "seed": (_as_int, 0),
        "csv": (_as_str, "subsample.csv"),
    },
    "amplify": {
        "p": (_as_float, 0.5),
        "k": (_as_int, 41),
        "csv": (_as_str, "amplify.csv"),
    },
}


# ---------------------------------------------------------------------------
# runners


def _run_chsh_gap(params: Mapping[str, Any]):
    _, fam = chsh_protocol()
    exact = exact_classical_response_value(fam)
    cfg = OptimizerConfig(restarts=params["restarts"], seed=params["seed"])
    seesaw = seesaw_entangled_value(fam, config=cfg)
    rows = [
        ("exhaustive", exact.value, 0, 0),
        ("seesaw", seesaw.value, cfg.restarts, sum(len(t) for t in seesaw.iterates)),
    ]
    summary = f"unentangled value {exact.value:.6f}, entangled value {seesaw.value:.6f}"
    return ("method", "value", "restarts", "iters"), rows, None, summary


def _canonicalize_instance(spec: ProtocolSpec, prover: RawUnentangledStrategy):
    raw_value = acceptance_probability(spec, prover)
    canonical = canonicalize_prover(spec, prover)
    return raw_value, acceptance_probability(spec, canonical), canonical


def _run_canonicalize(params: Mapping[str, Any]):
    if (params["spec"] is None) != (params["prover"] is None):
        raise ValidationError("pass both of --spec and --prover, or neither")
    rows = []
    if params["spec"] is not None:
        spec = protocol_from_document(_read_document(params["spec"]))
        prover = strategy_from_document(_read_document(params["prover"]))
        raw_value, canon_value, canonical = _canonicalize_instance(spec, prover)
        if params["emit"] is not None:
            Path(params["emit"]).write_text(
                dumps_document(strategy_document(canonical)) + "\n", encoding="utf-8"
            )
        rows.append((0, raw_value, canon_value, canon_value - raw_value))
    else:
        if params["emit"] is not None:
            raise ValidationError("--emit needs an explicit --spec/--prover instance")
        for trial in range(params["trials"]):
            rng = derived_rng(params["seed"], "canonicalize", trial)
            spec = random_verifier_spec(rng)
            prover = random_raw_prover(rng, spec)
            raw_value, canon_value, _ = _canonicalize_instance(spec, prover)
            rows.append((trial, raw_value, canon_value, canon_value - raw_value))
    min_gain = min(row[3] for row in rows)
    if min_gain < -1e-9:
        raise NumericsError(f"canonical prover lost {-min_gain:.3e} acceptance")
    summary = f"{len(rows)} prover(s) canonicalized, min gain {min_gain:.3e}"
    return ("trial", "raw_value", "canonical_value", "gain"), rows, None, summary


def _run_eb_check(params: Mapping[str, Any]):
    rows = []
    if params["channel"] is not None:
        channel = channel_from_document(_read_document(params["channel"]))
        report = check_eb_ppt(channel)
        form = "kraus" if isinstance(channel, KrausChannel) else "eb"
        rows.append((0, form, report.min_eigenvalue, report.verdict))
    else:
        qubit = RegisterLayout(("M",), (2,))
        report = check_eb_ppt(KrausChannel.identity(qubit))
        rows.append((0, "identity", report.min_eigenvalue, report.verdict))
        for i in range(params["count"]):
            rng = derived_rng(params["seed"], "eb-check", i)
            report = check_eb_ppt(random_eb_channel(rng, qubit))
            rows.append((i + 1, "eb", report.min_eigenvalue, report.verdict))
    ppt = sum(1 for row in rows if row[3] == "PPT")
    summary = (
        f"{ppt}/{len(rows)} channel(s) PPT, "
        f"min partial-transpose eigenvalue {min(row[2] for row in rows):.6f}"
    )
    return ("instance", "form", "min_pt_eigenvalue", "verdict"), rows, None, summary


def _run_nexp_decide(params: Mapping[str, Any]):
    spec, _ = chsh_protocol()
    cfg = OptimizerConfig(seed=params["seed"], net_resolution=params["resolution"])
    decision = nexp_decide(spec, params["c"], params["s"], cfg)
    verdict = "accept" if decision.accepted else "reject"
    rows = [(decision.threshold, decision.value, decision.net_error, verdict)]
    summary = (
        f"{verdict}: value {decision.value:.6f} against threshold "
        f"{decision.threshold:.6f} (net error {decision.net_error:.6f})"
    )
    return ("threshold", "value", "net_error", "verdict"), rows, None, summary


def _run_subsample(params: Mapping[str, Any]):
    if params["family"] != "chsh":
        raise ValidationError(f"unknown family {params['family']!r}; only chsh is built in")
    _, fam = chsh_protocol()
    report = subsampling_experiment(
        fam, params["r"], params["eps"], params["trials"], params["seed"]
    )
    rows = [
        (trial, report.r, report.lhs_value, rhs, dev)
        for trial, (rhs, dev) in enumerate(zip(report.rhs_values, report.deviations))
    ]
    footer = [("failure_fraction", report.failure_fraction), ("eps", report.eps)]
    mean_dev = sum(report.deviations) / len(report.deviations)
    summary = (
        f"r={report.r}: mean deviation {mean_dev:.6f}, "
        f"failure fraction {report.failure_fraction:.6f} at eps {report.eps:g}"
    )
    return ("trial", "r", "lhs", "rhs", "deviation"), rows, footer, summary


def _run_amplify(params: Mapping[str, Any]):
    value = majority_amplify(params["p"], params["k"])
    summary = f"majority success probability {value:.6f}"
    return ("p", "k", "value"), [(params["p"], params["k"], value)], None, summary


_RUNNERS = {
    "chsh-gap": _run_chsh_gap,
    "canonicalize": _run_canonicalize,
    "eb-check": _run_eb_check,
    "nexp-decide": _run_nexp_decide,
    "subsample": _run_subsample,
    "amplify": _run_amplify,
}


def run(config: ExperimentConfig) -> int:
    """Execute the experiment, write its CSV report, print the summary."""
    columns, rows, footer, summary = _RUNNERS[config.command](config.params)
    csv_path = Path(config.params["csv"])
    csv_path.write_bytes(render_csv(columns, rows, config.document(), footer))
    print(summary)
    print(f"report: {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _read_document(path: str) -> Any:
    try:
        if path == "-":
            return json.load(sys.stdin)
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not a valid document: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qiplab", description="seeded experiments with CSV reports"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file ('-' for stdin); flags override")
        p.add_argument("--csv", help="CSV report path")
        return p

    p = add("chsh-gap", "exact classical value vs see-saw entangled value")
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)

    p = add("canonicalize", "fold raw unentangled provers into canonical form")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--spec", help="protocol document to canonicalize against")
    p.add_argument("--prover", help="raw strategy document")
    p.add_argument("--emit", help="write the canonical strategy document here")

    p = add("eb-check", "partial-transpose test on Choi states")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--channel", help="channel document to check instead of a seeded batch")

    p = add("nexp-decide", "net-based threshold decision on the built-in game")
    p.add_argument("--c", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--resolution", type=int)
    p.add_argument("--seed", type=int)

    p = add("subsample", "challenge subsampling deviation experiment")
    p.add_argument("--family")
    p.add_argument("--r", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)

    p = add("amplify", "exact majority-vote amplification probability")
    p.add_argument("--p", type=float)
    p.add_argument("--k", type=int)

    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    file_params: dict[str, Any] = {}
    if args.config is not None:
        loaded = _read_document(args.config)
        if not isinstance(loaded, dict):
            raise ValidationError("config document must be a key/value object")
        tag = loaded.pop("command", args.command)
        if tag != args.command:
            raise ValidationError(f"config is for {tag!r} but the command is {args.command!r}")
        file_params = loaded
    flag_params = {
        name: value
        for name, value in vars(args).items()
        if name not in ("command", "config") and value is not None
    }
    return ExperimentConfig(args.command, {**file_params, **flag_params})


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(config_from_args(args))
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except QipLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - anything else is an internal failure
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
