#!/usr/bin/env python3
"""Regenerate the CLI test fixtures. Output is deterministic."""

import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent


def write_jsonl(name, rows):
    with open(HERE / name, "w") as f:
        for r in rows:
            f.write(json.dumps(r, sort_keys=False) + "\n")


def write_json(name, value):
    with open(HERE / name, "w") as f:
        json.dump(value, f, indent=1)
        f.write("\n")


def sample(ds, sid, qid, qtext, sol, rubric, resp, label, split):
    return {
        "id": sid,
        "dataset": ds,
        "question_id": qid,
        "question_text": qtext,
        "model_solution": sol,
        "rubric_text": rubric,
        "response_text": resp,
        "label": label,
        "split": split,
        "provenance": "human",
    }


def toy_base():
    rows = []
    for q in range(1, 21):
        qid = f"b{q:02}"
        qtext = f"Base question {q}: what does component {q} do?"
        sol = f"Component {q} regulates stage {q} of the process."
        for i in range(4):
            rows.append(sample("toy-base", f"{qid}-c{i}", qid, qtext, sol, None,
                               f"Component {q} regulates stage {q} (variant {i}).", "correct", "train"))
        for i in range(4):
            rows.append(sample("toy-base", f"{qid}-i{i}", qid, qtext, sol, None,
                               f"Component {q} is decorative (variant {i}).", "incorrect", "train"))
    write_jsonl("toy_base_2way.jsonl", rows)


LABELS = ["correct", "partially_correct", "incorrect"]
POINTS = {"correct": 2, "partially_correct": 1, "incorrect": 0}


def grading_set():
    rows = []
    test = []
    for q in range(1, 5):
        qid = f"q{q}"
        qtext = f"Explain why circuit {q} overheats when the load doubles."
        sol = f"Power in circuit {q} scales with the square of current, so doubling the load raises heat."
        rubric = (f"- Correct: names the current-squared relation and links it to heat in circuit {q}.\n"
                  f"- Partially Correct: mentions current or heat but not the relation.\n"
                  f"- Incorrect: neither.")
        for label in LABELS:
            for i in range(6):
                rows.append(sample("toy-grading", f"{qid}-tr-{label[0]}{i}", qid, qtext, sol, rubric,
                                   f"Train answer {i} for {qid} graded {label}.", label, "train"))
        for label in LABELS:
            for i in range(2):
                s = sample("toy-grading", f"{qid}-te-{label[0]}{i}", qid, qtext, sol, rubric,
                           f"Test answer {i} for {qid} that is {label}.", label, "test")
                rows.append(s)
                test.append(s)
    write_jsonl("grading_3way.jsonl", rows)

    # The grader is right on most samples, off by one tier on every fifth,
    # unparseable-then-recovered on one and unscored on another.
    entries = []
    for n, s in enumerate(test):
        key = f"Student Answer: {s['response_text']}\n"
        gold = POINTS[s["label"]]
        if n == 3:
            entries.append({"endpoint": "chat/completions", "contains": [key, "Respond with only the bracketed score."],
                            "replies": [{"content": "[[1]]"}]})
            entries.append({"endpoint": "chat/completions", "contains": [key],
                            "replies": [{"content": "The answer seems fine overall."}]})
            continue
        if n == 7:
            entries.append({"endpoint": "chat/completions", "contains": [key],
                            "replies": [{"content": "I cannot decide."}]})
            continue
        pred = gold if n % 5 else (gold + 1) % 3
        entries.append({"endpoint": "chat/completions", "contains": [key],
                        "replies": [{"content": f"The answer addresses the question. [[{pred}]]"}]})
    write_json("grading_replay.json", {"entries": entries})
    return rows


ELEMENTS = ["names the current-squared relation", "links current to heat", "mentions the doubled load"]


def diversity(rows):
    questions = {}
    for r in rows:
        if r["split"] == "train":
            questions.setdefault(r["question_id"], r)
    entries = [
        {"endpoint": "chat/completions", "contains": ["List the distinct elements"],
         "replies": [{"content": json.dumps(ELEMENTS)}]},
        {"endpoint": "chat/completions", "contains": ["case statements"],
         "replies": [{"content": json.dumps([
             {"included_elements": ELEMENTS, "label": "correct"},
             {"included_elements": [ELEMENTS[1]], "label": "partially_correct"},
             {"included_elements": [], "label": "incorrect"},
         ])}]},
    ]
    grading = []
    for qid, r in questions.items():
        q = f"Question: {r['question_text']}\n"
        full = f"For {qid} I think current squared makes heat and the load doubled, so it overheats."
        one = f"For {qid} more current gives more heat."
        none = f"For {qid} the wires are probably old."
        entries += [
            {"endpoint": "chat/completions", "contains": ["simulating a student", q, f"- {ELEMENTS[0]}"],
             "replies": [{"content": full}]},
            {"endpoint": "chat/completions", "contains": ["simulating a student", q, "exactly these rubric elements"],
             "replies": [{"content": one}]},
            {"endpoint": "chat/completions", "contains": ["simulating a student", q, "none of the rubric elements"],
             "replies": [{"content": none}]},
        ]
        # The relabel pass disagrees with the full-set target.
        grading += [
            {"endpoint": "chat/completions", "contains": [f"Student Answer: {full}\n"], "replies": [{"content": "[[1]]"}]},
            {"endpoint": "chat/completions", "contains": [f"Student Answer: {one}\n"], "replies": [{"content": "[[1]]"}]},
            {"endpoint": "chat/completions", "contains": [f"Student Answer: {none}\n"], "replies": [{"content": "[[0]]"}]},
        ]
    write_json("diversity_replay.json", {"entries": entries + grading})


def disagreement_results():
    rng = random.Random(60)
    recs = []
    for i in range(80):
        gold = LABELS[i % 3]
        if i < 60:
            pred = LABELS[(i % 3 + 1 + (i // 3) % 2) % 3]
        else:
            pred = gold
        recs.append({
            "sample_id": f"d{i:03}",
            "dataset": "toy-annot",
            "question_id": f"q{i % 5}",
            "scheme": "3way",
            "mode": {"kind": "rubric"},
            "model": "grader-mini",
            "prompt_digest": f"{rng.getrandbits(128):032x}",
            "raw_reply": f"The answer has gaps in step {i}. [[{POINTS[pred]}]]",
            "predicted": pred,
            "gold": gold,
            "attempts": 1,
            "n_examples": 0,
            "response_text": f"Response number {i}, with a comma.",
            "rubric_text": "- Correct: full reasoning.\n- Incorrect: otherwise.",
        })
    rng.shuffle(recs)
    write_jsonl("results_60_disagreements.jsonl", recs)


def similarity():
    rows = []
    rng = random.Random(8)
    texts = set()
    for q in range(1, 4):
        qid = f"s{q}"
        sol = f"Solution text for question {q}."
        for i in range(2):
            resp = f"Answer {i} to question {q}."
            rows.append(sample("toy-sim", f"{qid}-{i}", qid, f"Question {q}?", sol, sol, resp, "correct", "test"))
            texts.add(resp)
        texts.add(sol)
    write_jsonl("similarity_toy.jsonl", rows)
    vectors = [[round(rng.uniform(0.1, 1.0), 6) for _ in range(8)] for _ in sorted(texts)]
    write_json("similarity_replay.json", {"entries": [
        {"endpoint": "embeddings", "replies": [{"embeddings": vectors}]},
    ]})


if __name__ == "__main__":
    toy_base()
    rows = grading_set()
    diversity(rows)
    disagreement_results()
    similarity()
