"""Encoder process for registered pre-trained text encoders.

Reads {"i": n, "text": ...} lines on stdin and writes
{"i": n, "vector": [...], "truncated": bool} lines on stdout. Texts are cut to
--max-tokens tokens of the model's own tokenizer before encoding.
"""

import argparse
import json
import sys


def pool(hidden, mask, how):
    import torch

    if how == "cls":
        return hidden[:, 0]
    if how == "last":
        idx = mask.sum(dim=1) - 1
        return hidden[torch.arange(hidden.shape[0]), idx]
    m = mask.unsqueeze(-1).to(hidden.dtype)
    return (hidden * m).sum(dim=1) / m.sum(dim=1).clamp(min=1)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--encoder", required=True)
    ap.add_argument("--weights", required=True)
    ap.add_argument("--max-tokens", type=int, default=512)
    ap.add_argument("--pooling", default="mean")
    ap.add_argument("--batch-size", type=int, default=8)
    args = ap.parse_args(argv)

    import torch
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(args.weights)
    model = AutoModel.from_pretrained(args.weights)
    model.eval()

    items = [json.loads(line) for line in sys.stdin if line.strip()]
    out = sys.stdout
    for start in range(0, len(items), args.batch_size):
        chunk = items[start : start + args.batch_size]
        texts = [c["text"] for c in chunk]
        full = tokenizer(texts, add_special_tokens=True)["input_ids"]
        enc = tokenizer(texts, padding=True, truncation=True, max_length=args.max_tokens, return_tensors="pt")
        with torch.no_grad():
            hidden = model(**enc).last_hidden_state
        vecs = pool(hidden, enc["attention_mask"], args.pooling).float().cpu().numpy()
        for c, ids, v in zip(chunk, full, vecs):
            out.write(json.dumps({"i": c["i"], "vector": v.tolist(), "truncated": len(ids) > args.max_tokens}) + "\n")
    out.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
