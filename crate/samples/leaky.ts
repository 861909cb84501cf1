# A system that leaks its input: secret direction dH drives it to `high`,
# dL to `low`, and the public atom `out` is visible exactly in `high`.
atoms out
locations start high low
directions dH dL
init start
label high out
trans start dH high
trans start dL low
trans high dH high
trans high dL low
trans low dH high
trans low dL low
