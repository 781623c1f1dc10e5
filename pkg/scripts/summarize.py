"""Print the summary block of every manifest under a results directory.

    python scripts/summarize.py results
"""

import json
import sys
from pathlib import Path


def main(root: str) -> None:
    for man in sorted(Path(root).rglob("*_manifest.json")):
        doc = json.loads(man.read_text())
        print(f"## {doc['experiment']} (root seed {doc['root_seed']}) - {man.parent}")
        print(json.dumps(doc["summary"], indent=2, sort_keys=True))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "results")
