"""Line-protocol scorer stub used by client tests.

Speaks the NDJSON scorer protocol on stdio: announces readiness, then
answers each {"id", "text"} request with {"id", "prob_relevant"}.

Flags:
    --prob P      constant probability for every request (default: 0.9 if
                  the text contains "mal", else 0.1)
    --reorder N   buffer N requests and answer them in reverse order
    --garble      emit one unparseable line before the first response
"""
import argparse
import json
import sys


def respond(payload):
    sys.stdout.write(json.dumps(payload) + "\n")
    sys.stdout.flush()


def score(text, fixed):
    if fixed is not None:
        return fixed
    return 0.9 if "mal" in text else 0.1


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--prob", type=float, default=None)
    parser.add_argument("--reorder", type=int, default=0)
    parser.add_argument("--garble", action="store_true")
    args = parser.parse_args()

    respond({"ready": True})
    garbled = False
    buffered = []
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
            rid = request["id"]
            text = request["text"]
        except (ValueError, KeyError, TypeError):
            respond({"id": None, "error": "malformed request"})
            continue
        if args.garble and not garbled:
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            garbled = True
        reply = {"id": rid, "prob_relevant": score(text, args.prob)}
        if args.reorder > 1:
            buffered.append(reply)
            if len(buffered) >= args.reorder:
                for item in reversed(buffered):
                    respond(item)
                buffered = []
        else:
            respond(reply)
    for item in reversed(buffered):
        respond(item)


if __name__ == "__main__":
    main()
