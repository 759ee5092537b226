"""Framed protocol walkthrough: canonical bytes, round trips, rejection."""

from telecollab.wire import (FrameDecoder, ProtocolError, decode_frame,
                             encode_frame, make_envelope)

ping = make_envelope("PING", "console", seq=1, ts_ms=0, body={})
frame = encode_frame(ping)
print("a PING frame on the wire:")
print("  length prefix:", frame[:4].hex(), "=", int.from_bytes(frame[:4], "big"), "bytes")
print("  payload:      ", frame[4:].decode())

update = make_envelope("PHANTOM_UPDATE", "alice", seq=2, ts_ms=1234,
                       body={"q": [0.1, -0.2, 0.3, 0.0, 0.25, -0.05]})
encoded = encode_frame(update)
decoded, consumed = decode_frame(encoded)
print("\nround trip is exact:", decoded == update)

print("\nframes survive arbitrary stream chunking:")
stream = encode_frame(ping) + encoded
decoder = FrameDecoder()
for i in range(0, len(stream), 11):
    decoder.feed(stream[i:i + 11])
    for envelope in decoder.frames():
        print("  got", envelope.msg_type, "seq", envelope.seq)

print("\ncorruption is connection-fatal:")
broken = bytearray(encoded)
broken[4] = ord("?")
try:
    decode_frame(bytes(broken))
except ProtocolError as exc:
    print("  rejected:", exc)
