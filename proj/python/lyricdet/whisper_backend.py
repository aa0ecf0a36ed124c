"""Transcriber process for the "whisper" backend.

Invoked by the native CommandTranscriber as
    python3 -m lyricdet.whisper_backend --model M --beam-size B --temperature T --language L file.wav
and prints {"text": ..., "language": ...} on stdout. Needs the openai-whisper
package; model weights are looked up in $LYRICDET_MODEL_DIR when set.
"""

import argparse
import json
import os
import sys


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default="large-v2")
    ap.add_argument("--beam-size", type=int, default=5)
    ap.add_argument("--temperature", type=float, default=0.0)
    ap.add_argument("--language", default="auto")
    ap.add_argument("wav")
    args = ap.parse_args(argv)

    try:
        import whisper
    except ImportError:
        print("openai-whisper is not installed", file=sys.stderr)
        return 2

    model = whisper.load_model(args.model, download_root=os.environ.get("LYRICDET_MODEL_DIR"))
    options = {"beam_size": args.beam_size, "temperature": args.temperature}
    if args.language != "auto":
        options["language"] = args.language
    result = model.transcribe(args.wav, **options)
    json.dump({"text": result["text"].strip(), "language": result.get("language")}, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
