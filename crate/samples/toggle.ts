# A two-location toggle: direction dA moves to lA, direction dB moves to
# lB, from anywhere. The atom `a` holds exactly in lA.
atoms a
locations lA lB
directions dA dB
init lA
label lA a
trans lA dA lA
trans lA dB lB
trans lB dA lA
trans lB dB lB
