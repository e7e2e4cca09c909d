import { describe, expect, it } from "vitest";

import {
  dequantizeCoord,
  guidanceMessage,
  parseStreamMessage,
  PriorValidationError,
  ProtocolError,
  quantizeCoord,
  validatePrior,
} from "../src/protocol.js";

describe("coordinate quantization mirror", () => {
  it("maps the endpoints exactly", () => {
    expect(quantizeCoord(0)).toBe(0);
    expect(quantizeCoord(1)).toBe(999);
  });

  it("round-trips through bin centers", () => {
    for (let q = 0; q < 1000; q += 37) {
      expect(quantizeCoord(dequantizeCoord(q))).toBe(q);
    }
  });

  it("rejects out-of-range input", () => {
    expect(() => quantizeCoord(-0.01)).toThrow(RangeError);
    expect(() => quantizeCoord(1.01)).toThrow(RangeError);
    expect(() => dequantizeCoord(1000)).toThrow(RangeError);
  });
});

describe("client-side prior validation", () => {
  it("accepts well-formed priors", () => {
    validatePrior({ kind: "point", x: 0.431, y: 0.382 });
    validatePrior({ kind: "box", x_min: 0.1, y_min: 0.2, x_max: 0.3, y_max: 0.4 });
    validatePrior({ kind: "trace", points: [[0.1, 0.1], [0.9, 0.9]] });
  });

  it("rejects coordinates outside the unit square", () => {
    expect(() => validatePrior({ kind: "point", x: 1.7, y: 0.5 })).toThrow(
      PriorValidationError
    );
    expect(() =>
      validatePrior({ kind: "trace", points: [[0.1, 0.1], [0.2, -0.1]] })
    ).toThrow(PriorValidationError);
  });

  it("rejects inverted or empty boxes", () => {
    expect(() =>
      validatePrior({ kind: "box", x_min: 0.5, y_min: 0.2, x_max: 0.3, y_max: 0.4 })
    ).toThrow(PriorValidationError);
    expect(() =>
      validatePrior({ kind: "box", x_min: 0.3, y_min: 0.2, x_max: 0.3, y_max: 0.4 })
    ).toThrow(PriorValidationError);
  });

  it("rejects traces outside the 2..32 point range", () => {
    expect(() => validatePrior({ kind: "trace", points: [[0.5, 0.5]] })).toThrow(
      PriorValidationError
    );
    const long = Array.from({ length: 33 }, (_, i) => [i / 40, i / 40] as [number, number]);
    expect(() => validatePrior({ kind: "trace", points: long })).toThrow(
      PriorValidationError
    );
  });
});

describe("guidance envelope", () => {
  it("wraps a prior with timing and provenance", () => {
    const msg = guidanceMessage({ kind: "point", x: 0.5, y: 0.5 }, 37);
    expect(msg).toEqual({
      type: "Guidance",
      event: {
        prior: { kind: "point", x: 0.5, y: 0.5 },
        timing: "mid_episode",
        source: "user",
        issued_at: 37,
      },
    });
  });

  it("never emits an invalid prior", () => {
    expect(() => guidanceMessage({ kind: "point", x: 2, y: 0 }, 0)).toThrow(
      PriorValidationError
    );
  });

  it("forces issued_at = 0 for up-front events", () => {
    expect(() =>
      guidanceMessage({ kind: "point", x: 0.5, y: 0.5 }, 3, "up_front")
    ).toThrow(PriorValidationError);
  });
});

describe("stream frame parsing", () => {
  it("accepts every documented message type", () => {
    const hello = parseStreamMessage(
      '{"type": "Hello", "session": "ab12", "seq": -1, "protocol_version": 1}'
    );
    expect(hello.type).toBe("Hello");
    const gap = parseStreamMessage(
      '{"type": "Gap", "session": "ab12", "seq": 9, "dropped": 4}'
    );
    expect(gap.type).toBe("Gap");
  });

  it("rejects junk frames instead of crashing downstream", () => {
    expect(() => parseStreamMessage("not json")).toThrow(ProtocolError);
    expect(() => parseStreamMessage('{"type": "Surprise", "seq": 1}')).toThrow(
      ProtocolError
    );
    expect(() => parseStreamMessage('{"type": "Cot"}')).toThrow(ProtocolError);
  });
});
