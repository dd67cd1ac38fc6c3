"""Regenerate the tic-tac-toe endgame dataset by exhaustive game enumeration.

Every board reachable at the end of a game where x moves first is listed
once; the class is ``positive`` when x has three in a row. The UCI version
of this dataset has 958 such boards (626 positive).

    python scripts/make_tictactoe.py src/dbl/data/tic-tac-toe
"""
from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

SQUARES = [
    "top-left", "top-middle", "top-right",
    "middle-left", "middle-middle", "middle-right",
    "bottom-left", "bottom-middle", "bottom-right",
]
LINES = [
    (0, 1, 2), (3, 4, 5), (6, 7, 8),
    (0, 3, 6), (1, 4, 7), (2, 5, 8),
    (0, 4, 8), (2, 4, 6),
]


def wins(board: list[str], player: str) -> bool:
    return any(all(board[i] == player for i in line) for line in LINES)


def terminal_boards() -> set[tuple[str, ...]]:
    seen: set[tuple[str, ...]] = set()
    out: set[tuple[str, ...]] = set()

    def play(board: list[str], player: str) -> None:
        key = tuple(board)
        if key in seen:
            return
        seen.add(key)
        if wins(board, "x") or wins(board, "o") or "b" not in board:
            out.add(key)
            return
        for i, cell in enumerate(board):
            if cell == "b":
                board[i] = player
                play(board, "o" if player == "x" else "x")
                board[i] = "b"

    play(["b"] * 9, "x")
    return out


def main(argv: list[str]) -> int:
    stem = Path(argv[1]) if len(argv) > 1 else Path("tic-tac-toe")
    boards = sorted(terminal_boards())
    with open(stem.with_suffix(".csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SQUARES + ["class"])
        for board in boards:
            label = "positive" if wins(list(board), "x") else "negative"
            writer.writerow(list(board) + [label])
    meta = {
        "attributes": [{"name": s, "kind": "categorical", "missing_tokens": []} for s in SQUARES],
        "class": {"name": "class"},
    }
    stem.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    positives = sum(wins(list(b), "x") for b in boards)
    print(f"{len(boards)} boards, {positives} positive")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
