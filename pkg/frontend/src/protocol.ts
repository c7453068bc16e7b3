// Wire protocol (version 1) spoken with the teleop service.
// Mirrors docs/protocol.md field by field; every outbound message is
// validated against these schemas before send.

import { z } from "zod";

export const PROTOCOL_VERSION = 1;

const side = z.enum(["left", "right"]);

export const JogMessage = z
  .object({
    protocol_version: z.literal(PROTOCOL_VERSION),
    type: z.literal("jog"),
    side,
    dL1_rate: z.number().optional(),
    dL2_rate: z.number().optional(),
    dTheta4_rate: z.number().optional(),
    dWidth_rate: z.number().optional(),
  })
  .strict();

export const GotoMessage = z
  .object({
    protocol_version: z.literal(PROTOCOL_VERSION),
    type: z.literal("goto"),
    side,
    x: z.number(),
    y: z.number(),
    speed: z.number().optional(),
  })
  .strict();

export const PrimitiveMessage = z
  .object({
    protocol_version: z.literal(PROTOCOL_VERSION),
    type: z.literal("primitive"),
    name: z.enum(["grasp", "release", "translate", "rotate", "convey", "auto_grip"]),
    params: z.record(z.unknown()).optional(),
  })
  .strict();

export const SetServoMessage = z
  .object({
    protocol_version: z.literal(PROTOCOL_VERSION),
    type: z.literal("set_servo"),
    F_desired: z.number(),
    Kp: z.number(),
    deadband: z.number(),
    width_rate_limit: z.number(),
  })
  .strict();

export const SpawnMessage = z
  .object({
    protocol_version: z.literal(PROTOCOL_VERSION),
    type: z.literal("spawn_object"),
    id: z.string(),
    shape: z.union([
      z.object({ kind: z.literal("circle"), radius: z.number().positive() }).strict(),
      z
        .object({
          kind: z.literal("ellipse"),
          semi_major: z.number().positive(),
          semi_minor: z.number().positive(),
        })
        .strict(),
    ]),
    pose: z
      .object({ x: z.number(), y: z.number(), theta: z.number().optional() })
      .strict()
      .optional(),
    held: z.boolean().optional(),
  })
  .strict();

export const ResetMessage = z
  .object({ protocol_version: z.literal(PROTOCOL_VERSION), type: z.literal("reset") })
  .strict();

export const SubscribeMessage = z
  .object({
    protocol_version: z.literal(PROTOCOL_VERSION),
    type: z.literal("subscribe"),
    rate_hz: z.number().positive(),
  })
  .strict();

export const ClientMessage = z.union([
  JogMessage,
  GotoMessage,
  PrimitiveMessage,
  SetServoMessage,
  SpawnMessage,
  ResetMessage,
  SubscribeMessage,
]);
export type ClientMessage = z.infer<typeof ClientMessage>;

// --- server -> client -------------------------------------------------------

const appendage = z.object({
  side,
  L: z.number(),
  a: z.number(),
  theta4: z.number(),
  L1: z.number(),
  L2: z.number(),
  L3: z.number(),
  theta1: z.number(),
  theta2: z.number(),
  r: z.number(),
  tip: z.tuple([z.number(), z.number()]),
});
export type Appendage = z.infer<typeof appendage>;

const simObject = z.object({
  id: z.string(),
  shape: z.union([
    z.object({ kind: z.literal("circle"), radius: z.number() }),
    z.object({
      kind: z.literal("ellipse"),
      semi_major: z.number(),
      semi_minor: z.number(),
    }),
  ]),
  position: z.tuple([z.number(), z.number()]),
  orientation: z.number(),
  held: z.boolean(),
});
export type SimObjectMsg = z.infer<typeof simObject>;

const contact = z.object({
  object_id: z.string(),
  side,
  segment: z.enum(["inner_section", "tip_arc"]),
  point: z.tuple([z.number(), z.number()]),
  normal: z.tuple([z.number(), z.number()]),
  penetration: z.number(),
  normal_force: z.number(),
  s_along: z.number(),
  surface_displacement: z.number(),
  lever: z.number(),
  overtravel: z.boolean(),
  buckled: z.boolean(),
});
export type ContactMsg = z.infer<typeof contact>;

const estimate = z
  .object({
    F_read: z.number(),
    F2_prime: z.number(),
    F2_prime_raw: z.number(),
    L2_prime: z.number(),
  })
  .nullable();

export const StateMessage = z.object({
  type: z.literal("state"),
  schema_version: z.number(),
  tick: z.number(),
  width: z.number(),
  left: appendage,
  right: appendage,
  objects: z.array(simObject),
  contacts: z.array(contact),
  events: z.array(z.object({ type: z.string(), data: z.record(z.unknown()) })),
  estimates: z.object({ left: estimate, right: estimate }),
  active_primitive: z
    .object({ name: z.string().nullable(), phase: z.string().nullable() })
    .nullable(),
});
export type StateMessage = z.infer<typeof StateMessage>;

export const HelloMessage = z.object({
  type: z.literal("hello"),
  protocol_version: z.number(),
  tick_hz: z.number(),
  config: z.object({
    outer_extruder_spacing: z.number(),
    width_min: z.number(),
    width_max: z.number(),
    L_min: z.number(),
    L_max: z.number(),
    theta4_min: z.number(),
    theta4_max: z.number(),
    r0: z.number(),
    b: z.number(),
    contact_threshold: z.number(),
  }),
});
export type HelloMessage = z.infer<typeof HelloMessage>;

export const EventMessage = z.object({
  type: z.literal("event"),
  tick: z.number(),
  event: z.object({ type: z.string(), data: z.record(z.unknown()) }),
});

export const ErrorMessage = z.object({
  type: z.literal("error"),
  code: z.string(),
  message: z.string(),
});

export const ServerMessage = z.union([
  HelloMessage,
  StateMessage,
  EventMessage,
  ErrorMessage,
]);
export type ServerMessage = z.infer<typeof ServerMessage>;

export function parseServerMessage(raw: string): ServerMessage {
  return ServerMessage.parse(JSON.parse(raw));
}

export function validateOutbound(msg: unknown): ClientMessage {
  return ClientMessage.parse(msg);
}
