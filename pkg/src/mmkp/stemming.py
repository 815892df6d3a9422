"""Porter suffix-stripping stemmer (the 1980 algorithm, steps 1a-5b).

Follows the author's canonical rule set, including the maintained departures
(bli->ble, the logi->log rule, and leaving words of length <= 2 untouched).
Non-alphabetic input is returned unchanged.
"""


def porter_stem(word):
    if not word.isalpha() or len(word) <= 2:
        return word
    return _Stemmer(word.lower()).run()


class _Stemmer:
    def __init__(self, word):
        self.b = word

    # -- shape predicates over the current stem ----------------------------

    def _cons(self, i):
        c = self.b[i]
        if c in "aeiou":
            return False
        if c == "y":
            return i == 0 or not self._cons(i - 1)
        return True

    def _m(self, j):
        """Number of VC sequences in b[:j+1]."""
        n = 0
        i = 0
        while True:
            if i > j:
                return n
            if not self._cons(i):
                break
            i += 1
        i += 1
        while True:
            while True:
                if i > j:
                    return n
                if self._cons(i):
                    break
                i += 1
            i += 1
            n += 1
            while True:
                if i > j:
                    return n
                if not self._cons(i):
                    break
                i += 1
            i += 1

    def _vowel_in_stem(self, j):
        return any(not self._cons(i) for i in range(j + 1))

    def _double_cons(self, j):
        return j >= 1 and self.b[j] == self.b[j - 1] and self._cons(j)

    def _cvc(self, j):
        if j < 2 or not self._cons(j) or self._cons(j - 1) or not self._cons(j - 2):
            return False
        return self.b[j] not in "wxy"

    # -- rule application ---------------------------------------------------

    def _ends(self, suffix):
        if not self.b.endswith(suffix):
            return False
        self.j = len(self.b) - len(suffix) - 1
        return self.j >= -1

    def _set(self, s):
        self.b = self.b[: self.j + 1] + s

    def _replace_if_m_gt0(self, s):
        if self._m(self.j) > 0:
            self._set(s)

    def run(self):
        self._step1ab()
        self._step1c()
        self._step2()
        self._step3()
        self._step4()
        self._step5()
        return self.b

    def _step1ab(self):
        if self.b.endswith("s"):
            if self._ends("sses"):
                self.b = self.b[:-2]
            elif self._ends("ies"):
                self._set("i")
            elif not self.b.endswith("ss"):
                self.b = self.b[:-1]
        if self._ends("eed"):
            if self._m(self.j) > 0:
                self.b = self.b[:-1]
        elif (self._ends("ed") or self._ends("ing")) and self._vowel_in_stem(self.j):
            self.b = self.b[: self.j + 1]
            if self._ends("at"):
                self._set("ate")
            elif self._ends("bl"):
                self._set("ble")
            elif self._ends("iz"):
                self._set("ize")
            elif self._double_cons(len(self.b) - 1):
                if self.b[-1] not in "lsz":
                    self.b = self.b[:-1]
            elif self._m(len(self.b) - 1) == 1 and self._cvc(len(self.b) - 1):
                self.b += "e"

    def _step1c(self):
        if self._ends("y") and self._vowel_in_stem(self.j):
            self.b = self.b[:-1] + "i"

    _STEP2 = [
        ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
        ("izer", "ize"), ("bli", "ble"), ("alli", "al"), ("entli", "ent"),
        ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
        ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
        ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
        ("logi", "log"),
    ]

    _STEP3 = [
        ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
        ("ical", "ic"), ("ful", ""), ("ness", ""),
    ]

    def _step2(self):
        for suffix, repl in self._STEP2:
            if self._ends(suffix):
                self._replace_if_m_gt0(repl)
                return

    def _step3(self):
        for suffix, repl in self._STEP3:
            if self._ends(suffix):
                self._replace_if_m_gt0(repl)
                return

    _STEP4 = [
        "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
        "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
    ]

    def _step4(self):
        for suffix in self._STEP4:
            if self._ends(suffix):
                if self._m(self.j) > 1:
                    if suffix == "ion" and (self.j < 0 or self.b[self.j] not in "st"):
                        return
                    self.b = self.b[: self.j + 1]
                return

    def _step5(self):
        if self.b.endswith("e"):
            j = len(self.b) - 2
            m = self._m(j)
            if m > 1 or (m == 1 and not self._cvc(j)):
                self.b = self.b[:-1]
        j = len(self.b) - 1
        if self.b.endswith("l") and self._double_cons(j) and self._m(j - 1) > 1:
            self.b = self.b[:-1]
