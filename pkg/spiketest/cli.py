"""Command-line front end.

Exit codes: 0 accept/success, 1 reject, 2 invalid config, 3 spike below the
detection threshold, 4 empty critical-value range, 5 estimator failure,
6 numerical failure, 7 I/O failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from spiketest.asymptotics import summarize
from spiketest.config_models import (
    ModelConfig,
    MomentOracleConfig,
    SimulateConfig,
    TableConfig,
    TestConfigModel,
    load_config,
)
from spiketest.constants import (
    EXIT_ACCEPT,
    EXIT_IO,
    EXIT_REJECT,
    EXIT_VALIDATION,
    SERVICE_HOST,
    SERVICE_PORT,
)
from spiketest.errors import SpikeTestError
from spiketest.factor_inference import CORRECTED, run_test
from spiketest.montecarlo import moment_oracle, table_runner
from spiketest.simulation import (
    eigenvalues_from_data,
    read_data_csv,
    sample_spectrum,
    write_spectrum_csv,
)

logger = logging.getLogger("spiketest")

PROJECT_ROOT = Path(__file__).resolve().parents[1]


def _emit(payload: str, output: Optional[str]) -> None:
    if output:
        with open(output, "w") as f:
            f.write(payload + "\n")
        print(f"✅ wrote {output}", file=sys.stderr)
    else:
        print(payload)


def cmd_asymptotics(args) -> int:
    model = load_config(args.config, ModelConfig).to_model()
    _emit(summarize(model).to_json(), args.output)
    return EXIT_ACCEPT


def cmd_test(args) -> int:
    cfg = load_config(args.config, TestConfigModel)
    eigs = eigenvalues_from_data(read_data_csv(args.data))
    outcome = run_test(eigs, cfg.to_config(), corrected=cfg.procedure == CORRECTED)
    print(outcome.verdict)
    print(outcome.to_json())
    return EXIT_REJECT if outcome.reject else EXIT_ACCEPT


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, SimulateConfig)
    seed = cfg.seed if args.seed is None else args.seed
    sample = sample_spectrum(cfg.to_spec(), cfg.n, cfg.dist.to_distribution(), seed)
    if args.output:
        write_spectrum_csv(sample, args.output)
        print(f"✅ wrote {sample.p} eigenvalues to {args.output}", file=sys.stderr)
    else:
        print(json.dumps(sample.to_dict()))
    return EXIT_ACCEPT


def cmd_mc_table(args) -> int:
    cfg = load_config(args.config, TableConfig)
    scenarios = cfg.to_scenarios(reps=args.reps, seed=args.seed)
    workers = cfg.workers if args.workers is None else args.workers
    frame = table_runner(scenarios, args.output, workers=workers)
    print(f"✅ {len(frame)} rows written to {args.output}", file=sys.stderr)
    return EXIT_ACCEPT


def cmd_moment_oracle(args) -> int:
    cfg = load_config(args.config, MomentOracleConfig)
    model = cfg.model.to_model()
    report = moment_oracle(model, model.n, model.p, cfg.dist.to_distribution(),
                           args.reps or cfg.reps, cfg.seed if args.seed is None else args.seed,
                           workers=args.workers or 1)
    _emit(report.to_json(), args.output)
    return EXIT_ACCEPT


def _service_app():
    # main.py sits beside the package, not inside it
    if str(PROJECT_ROOT) not in sys.path:
        sys.path.insert(0, str(PROJECT_ROOT))
    from main import app
    return app


def cmd_serve(args) -> int:
    import uvicorn
    uvicorn.run(_service_app(), host=args.host, port=args.port, log_level="info")
    return EXIT_ACCEPT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spiketest", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("asymptotics", help="print the asymptotic summary of a spiked model")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("test", help="test H0: t_m0 >= c on one spectrum")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-d", "--data", required=True, help="eigenvalue CSV or n x p data matrix")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="draw one sample spectrum")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--output")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc-table", help="empirical size/power table")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_mc_table)

    p = sub.add_parser("moment-oracle", help="Monte Carlo moments against closed forms")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--output")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_moment_oracle)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default=SERVICE_HOST)
    p.add_argument("--port", type=int, default=SERVICE_PORT)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logger.debug("running %s", args.command)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"❌ invalid config: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except SpikeTestError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"❌ I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        # malformed JSON or data file
        print(f"❌ unreadable input: {e}", file=sys.stderr)
        return EXIT_VALIDATION
