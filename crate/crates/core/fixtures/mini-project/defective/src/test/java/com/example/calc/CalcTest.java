package com.example.calc;

import static org.junit.Assert.assertEquals;

import org.junit.Test;

public class CalcTest {
    @Test
    public void testFirst() {
        Calc calc = new Calc(new int[] {4, 5, 6});
        assertEquals(4, calc.first());
    }

    @Test
    public void testSum() {
        Calc calc = new Calc(new int[] {1, 2, 3});
        assertEquals(6, calc.sum());
    }
}
