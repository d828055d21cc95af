"""Write the bundled fixture networks as model/media JSON files for the CLI."""

import argparse
from pathlib import Path

from mfgapfill import fixtures
from mfgapfill.model import save_media, save_model

BUILDERS = {
    "toy": fixtures.toy_network,
    "cost_weighting": fixtures.cost_weighting_network,
    "runaway": fixtures.runaway_network,
    "order": fixtures.order_sensitivity_network,
    "search": fixtures.search_instance,
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name, build in BUILDERS.items():
        model, media = build()
        save_model(model, args.out / f"{name}_model.json")
        save_media(media, args.out / f"{name}_media.json")
        print(f"{name}: {len(model.reactions)} reactions, {len(media)} media")


if __name__ == "__main__":
    main()
