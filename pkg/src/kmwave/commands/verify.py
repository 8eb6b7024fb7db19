import logging

import kmwave_core as kmc

from dataclasses import asdict
from typing import Any, Dict, List, Optional

from kmwave_core.commands import EnrichedCommand

from ..config import VerifyBlock, build_context
from ..io import write_json
from ..utils import config_option, out_option, prepare_run
from ..verification import run_verification

VERIFY_TABLE = [
    ("Property", "name"),
    ("Seed", "seed"),
    ("Defect", "defect"),
    ("Tolerance", "tolerance"),
    ("Passed", "passed"),
]


@kmc.command(
    name="verify",
    cls=EnrichedCommand,
    pass_config=True,
    auto_output="table",
    default_table=VERIFY_TABLE,
)
@config_option
@out_option
def verify(
    config: kmc.CliConfig,
    config_path: str,
    out_dir: Optional[str],
    logger: logging.Logger,
    **kwargs,
) -> List[Dict[str, Any]]:
    """
    Check conservation laws and the Hamiltonian structure numerically.

    The report is written to verify_report.json. The command exits with code 1 when a
    property is outside its tolerance.
    """
    run, out = prepare_run(config_path, out_dir, config.strict)
    block: VerifyBlock = run.require("verify")
    results = run_verification(build_context(run, threads=config.threads), block.properties, block.seeds)
    report = [asdict(result) for result in results]
    failed = sum(not result.passed for result in results)
    write_json(out / "verify_report.json", {"passed": failed == 0, "properties": report})
    if failed:
        print_format = config.output if config.output != "auto" else "table"
        kmc.console.formatted_print(report, print_format=print_format, table_cols=VERIFY_TABLE)
        raise kmc.VerificationFailed(failed, len(results))
    return report
