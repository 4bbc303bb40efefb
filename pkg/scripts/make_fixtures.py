"""Regenerate the deterministic fixture files under tests/fixtures/.

The smoke corpus is a small tech-support-flavoured collection where each
dialogue context shares topic vocabulary with its ground-truth response, so
retrieval quality on it is meaningfully above chance. Bridge-format files
(expansion predictions, generated negatives, embedding binaries) stand in
for outputs of the model-backed companion package.

Run from the repository root:  python scripts/make_fixtures.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from fullrank.corpus import concat_context, ingest_collection, ingest_dialogues
from fullrank.dense import HashedEncoder, VectorStore, build_store, encode, export_store

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "tests" / "fixtures"

TOPICS = [
    "kernel", "display", "audio", "network", "bootloader", "package",
    "compiler", "firewall", "printer", "bluetooth", "battery", "backup",
    "partition", "driver", "permissions", "encryption", "desktop", "terminal",
    "updates", "wireless",
]
ACTIONS = ["restart", "reinstall", "configure", "downgrade", "purge", "inspect"]
OBJECTS = ["service", "module", "daemon", "config", "cache", "repository"]


def smoke_responses(rng: np.random.Generator) -> list[dict]:
    rows = []
    for i in range(100):
        topic = TOPICS[i % len(TOPICS)]
        action = ACTIONS[int(rng.integers(len(ACTIONS)))]
        obj = OBJECTS[int(rng.integers(len(OBJECTS)))]
        text = (
            f"you should {action} the {topic} {obj} and check the logs "
            f"for ticket{i:03d}"
        )
        rows.append({"id": f"s{i:03d}", "text": text})
    return rows


def smoke_dialogues(rng: np.random.Generator, prefix: str, truths: list[int]) -> list[dict]:
    rows = []
    for n, i in enumerate(truths):
        topic = TOPICS[i % len(TOPICS)]
        first = f"my {topic} stopped working after the last update ticket{i:03d}"
        follow = f"did you already try to restart the {topic}?"
        last = f"yes but the {topic} problem is still there"
        utterances = [{"text": first, "speaker": "seeker"}]
        if rng.random() < 0.7:
            utterances.append({"text": follow, "speaker": "responder"})
            utterances.append({"text": last, "speaker": "seeker"})
        rows.append(
            {
                "id": f"{prefix}{n:03d}",
                "utterances": utterances,
                "response_id": f"s{i:03d}",
            }
        )
    return rows


def write_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def bridge_expansions(rng: np.random.Generator, responses: list[dict]) -> list[dict]:
    rows = []
    for row in responses[:20]:
        i = int(row["id"][1:])
        topic = TOPICS[i % len(TOPICS)]
        predictions = [
            f"my {topic} stopped working after the last update",
            f"how do i fix the {topic} ticket{i:03d}",
            f"is the {topic} broken for anyone else",
        ]
        rows.append({"id": row["id"], "predictions": predictions})
    return rows


def bridge_generated(dialogues: list[dict]) -> list[dict]:
    rows = []
    for row in dialogues[:10]:
        topic = row["utterances"][0]["text"].split()[1]
        rows.append(
            {
                "context_id": row["id"],
                "text": f"I had the same {topic} problem and a reboot fixed it for me.",
            }
        )
    return rows


def main() -> None:
    rng = np.random.default_rng(7)
    smoke = FIXTURES / "smoke"
    responses = smoke_responses(rng)
    write_jsonl(smoke / "collection.jsonl", responses)
    write_jsonl(smoke / "test.jsonl", smoke_dialogues(rng, "q", list(range(20))))
    write_jsonl(smoke / "train.jsonl", smoke_dialogues(rng, "t", list(range(20, 60))))
    write_jsonl(
        smoke / "validation.jsonl", smoke_dialogues(rng, "v", list(range(60, 70)))
    )

    bridge = FIXTURES / "bridge"
    bridge.mkdir(parents=True, exist_ok=True)
    write_jsonl(bridge / "expansions.jsonl", bridge_expansions(rng, responses))
    test_rows = json.loads(
        "[" + ",".join((smoke / "test.jsonl").read_text().splitlines()) + "]"
    )
    write_jsonl(bridge / "generated.jsonl", bridge_generated(test_rows))

    # Embedding fixtures for the import-based dense pipeline.
    collection = ingest_collection(smoke / "collection.jsonl")
    split = ingest_dialogues(smoke / "test.jsonl", collection)
    encoder = HashedEncoder(buckets=8192, dim=48, seed=123)
    export_store(build_store(encoder, collection), bridge / "response_embeddings.dvec")
    ctx_ids = [ctx.id for ctx, _ in split]
    ctx_matrix = np.stack(
        [encode(encoder, concat_context(ctx)) for ctx, _ in split]
    ).astype(np.float32)
    export_store(VectorStore(ctx_ids, ctx_matrix), bridge / "context_embeddings.dvec")
    print(f"fixtures written under {FIXTURES}")


if __name__ == "__main__":
    main()
